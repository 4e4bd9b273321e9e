import itertools
import math

import numpy as np
import pytest
from scipy import stats

from explab.exponents import ExpLambda, FixedL
from explab.metrics import MetricSpec
from explab.probability import Dist, Dmc, TypeDist
from explab.simulator import (Decoder, SimConfig, SimEstimate, SimMode, channel_sample,
                              decode_deterministic_list, decode_randomized_list,
                              estimate_error_probability, estimate_exponent, fit_exponent,
                              generate_codeword, joint_counts)
from explab.simulator import _binomial, _conditional_types, _multinomial

W = Dmc.bsc(0.1)
Q = Dist.uniform(2)
LN2 = math.log(2)


def rng(seed=0):
    return np.random.default_rng(seed)


def cfg(**kw):
    base = dict(channel=W, q=Q, n=20, rate=0.35 * LN2, metric=MetricSpec.matched(W), trials=4000, seed=1)
    base.update(kw)
    return SimConfig(**base)


# ---------------------------------------------------------------- samplers


@pytest.mark.parametrize("n, p", [(2**56, 2.5e-17), (2**61, 1e-18), (10**6, 3e-7)])
def test_binomial_tiny_probability_mean(n, p):
    r = rng(5)
    draws = np.array([_binomial(r, n, p) for _ in range(20_000)])
    lam = n * p
    # Poisson limit: sum of draws ~ Poisson(20000 lam) up to O(p) corrections
    assert stats.poisson(draws.size * lam).cdf(draws.sum()) > 5e-4
    assert stats.poisson(draws.size * lam).sf(draws.sum() - 1) > 5e-4


def test_multinomial_keeps_rare_cells():
    tables, p = _conditional_types((80, 80), (80, 80))
    assert np.all(np.diff(p) >= 0)
    n = 2**56
    r = rng(2)
    draws = np.array([_multinomial(r, n, p) for _ in range(4000)])
    assert all(int(row.sum()) == n for row in draws)
    expected = n * p
    for i in np.nonzero((expected > 0.05) & (expected < 1e4))[0]:
        total = int(draws[:, i].sum())
        lam = 4000 * expected[i]
        assert stats.poisson(lam).cdf(total) > 1e-4 and stats.poisson(lam).sf(total - 1) > 1e-4


# ---------------------------------------------------------------- codewords and channel


def test_codeword_two_element_class():
    r = rng(1)
    draws = np.array([generate_codeword(TypeDist(2, np.array([1, 1])), r) for _ in range(20_000)])
    first_one = int(np.count_nonzero(draws[:, 0] == 1))
    assert stats.binomtest(first_one, 20_000, 0.5).pvalue > 1e-3


def test_codeword_constant_class():
    r = rng(2)
    for _ in range(10):
        assert np.array_equal(generate_codeword(TypeDist(5, np.array([5, 0])), r), np.zeros(5))


def test_codeword_uniform_over_arrangements():
    r = rng(3)
    arrangements = sorted(set(itertools.permutations([0, 0, 1, 1])))
    assert len(arrangements) == 6
    counts = dict.fromkeys(arrangements, 0)
    N = 60_000
    for _ in range(N):
        counts[tuple(generate_codeword(TypeDist(4, np.array([2, 2])), r))] += 1
    sigma = math.sqrt(N * (1 / 6) * (5 / 6))
    assert all(abs(c - N / 6) <= 4 * sigma for c in counts.values())


def test_channel_examples():
    r = rng(4)
    x = r.integers(0, 2, size=1000)
    assert np.array_equal(channel_sample(Dmc([[1.0, 0.0], [0.0, 1.0]]), x, r), x)
    assert np.array_equal(channel_sample(Dmc.bsc(1.0), x, r), 1 - x)
    n = 10_000
    x = r.integers(0, 2, size=n)
    flips = np.count_nonzero(channel_sample(W, x, r) != x) / n
    assert abs(flips - 0.1) <= 4 * math.sqrt(0.09 / n)
    with pytest.raises(ValueError):
        channel_sample(W, np.array([0, 2]), r)


def test_joint_counts():
    book = np.array([[0, 0, 1], [1, 1, 1]])
    y = np.array([0, 1, 1])
    c = joint_counts(book, y, 2, 2)
    assert np.array_equal(c[0], [[1, 1], [0, 1]])
    assert np.array_equal(c[1], [[0, 0], [1, 2]])


# ---------------------------------------------------------------- decoders


def test_randomized_constant_metric_is_uniform():
    r = rng(5)
    book = r.integers(0, 2, size=(8, 10))
    y = r.integers(0, 2, size=10)
    draws = decode_randomized_list(book, y, MetricSpec.constant(0.0), 100_000, r, shape=(2, 2))
    freq = np.bincount(draws, minlength=8)
    assert stats.chisquare(freq).pvalue > 1e-3


def test_randomized_single_codeword():
    out = decode_randomized_list(np.array([[0, 1, 1]]), np.array([0, 1, 0]), MetricSpec.matched(W), 5, rng(),
                                 shape=(2, 2))
    assert np.array_equal(out, np.zeros(5))


def test_randomized_matches_exact_softmax():
    # three words with 0, 1 and 2 disagreements with y over n = 4
    y = np.array([0, 0, 0, 0])
    book = np.array([[0, 0, 0, 0], [1, 0, 0, 0], [1, 1, 0, 0]])
    g = MetricSpec.matched(W)
    logw = np.array([4 * math.log(0.9), 3 * math.log(0.9) + math.log(0.1), 2 * math.log(0.9) + 2 * math.log(0.1)])
    p = np.exp(logw - logw.max())
    p /= p.sum()
    N = 100_000
    freq = np.bincount(decode_randomized_list(book, y, g, N, rng(6)), minlength=3)
    assert np.all(np.abs(freq - N * p) <= 4 * np.sqrt(N * p * (1 - p)))
    assert stats.chisquare(freq, N * p).pvalue > 1e-3


@pytest.mark.parametrize("M", [4, 16])
def test_randomized_softmax_chi2_mmi(M):
    r = rng(M)
    n = 12
    book = r.integers(0, 2, size=(M, n))
    y = r.integers(0, 2, size=n)
    g = MetricSpec.mmi()
    ref = []
    for t in joint_counts(book, y, 2, 2) / n:
        prod = np.outer(t.sum(axis=1), t.sum(axis=0))
        pos = t > 0
        ref.append(n * np.sum(t[pos] * np.log(t[pos] / prod[pos])))
    ref = np.array(ref)
    p = np.exp(ref - ref.max())
    p /= p.sum()
    freq = np.bincount(decode_randomized_list(book, y, g, 100_000, r, shape=(2, 2)), minlength=M)
    keep = p * 100_000 >= 5  # pool-free chi-square over the well-populated cells
    expected = p[keep] / p[keep].sum() * freq[keep].sum()
    assert stats.chisquare(freq[keep], expected).pvalue > 1e-3


def test_randomized_undefined_metric():
    g = MetricSpec.mismatched(Dmc([[1.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        decode_randomized_list(np.array([[0, 1], [1, 0]]), np.array([1, 1]), g, 1, rng(), shape=(2, 2))


def test_deterministic_examples():
    r = rng(7)
    book = r.integers(0, 2, size=(6, 8))
    y = r.integers(0, 2, size=8)
    g = MetricSpec.matched(W)
    assert np.array_equal(decode_deterministic_list(book, y, g, 6), np.arange(6))
    assert np.array_equal(decode_deterministic_list(book, y, MetricSpec.constant(0.0), 3, shape=(2, 2)),
                          [0, 1, 2])
    with pytest.raises(ValueError):
        decode_deterministic_list(book, y, g, 7)


def test_deterministic_against_sort():
    r = rng(8)
    g = MetricSpec.matched(W)
    for _ in range(50):
        book = r.integers(0, 2, size=(10, 9))
        y = r.integers(0, 2, size=9)
        scores = [np.sum(np.where(row == y, math.log(0.9), math.log(0.1))) for row in book]
        order = sorted(range(10), key=lambda i: (-round(scores[i], 9), i))
        for L in (1, 3, 5):
            assert list(decode_deterministic_list(book, y, g, L)) == sorted(order[:L])


# ---------------------------------------------------------------- estimator


@pytest.mark.parametrize("mode", [SimMode.EXPLICIT, SimMode.ENUMERATOR])
@pytest.mark.parametrize("L", [1, 3])
def test_constant_metric_is_exact(mode, L):
    c = cfg(metric=MetricSpec.constant(0.0), list=FixedL(L), mode=mode, trials=300)
    est = estimate_error_probability(c)
    assert est.p_hat == pytest.approx((1 - 1 / c.M) ** L, rel=1e-12)
    assert est.stderr == pytest.approx(0, abs=1e-12)


def test_noiseless_two_words_vanishes():
    # M = 2 distinct-with-high-probability words over a noiseless channel
    ests = [estimate_error_probability(SimConfig(Dmc([[1.0, 0.0], [0.0, 1.0]]), Q, n, math.log(2) / n + 1e-9,
                                                 MetricSpec.matched(Dmc([[1.0, 0.0], [0.0, 1.0]])),
                                                 trials=2000, seed=3))
            for n in (2, 8, 20)]
    assert ests[0].p_hat > ests[1].p_hat > ests[2].p_hat
    assert ests[2].p_hat < 1e-4


def test_reproducible():
    a = estimate_error_probability(cfg(trials=3000))
    b = estimate_error_probability(cfg(trials=3000))
    assert a == b
    assert a != estimate_error_probability(cfg(trials=3000, seed=2))


def test_thread_count_does_not_change_the_result(monkeypatch):
    a = estimate_error_probability(cfg(trials=5000))
    monkeypatch.setenv("EXPLAB_THREADS", "3")
    assert estimate_error_probability(cfg(trials=5000)) == a


@pytest.mark.parametrize("decoder", [Decoder.RANDOMIZED, Decoder.DETERMINISTIC])
def test_explicit_and_enumerator_agree(decoder):
    kw = dict(n=20, list=FixedL(2), decoder=decoder, trials=20_000)
    a = estimate_error_probability(cfg(mode=SimMode.EXPLICIT, **kw))
    b = estimate_error_probability(cfg(mode=SimMode.ENUMERATOR, seed=9, **kw))
    assert abs(a.p_hat - b.p_hat) <= 3 * math.hypot(a.stderr, b.stderr)


def test_rao_blackwell_agrees_with_raw():
    a = estimate_error_probability(cfg(n=30, trials=40_000, mode=SimMode.ENUMERATOR))
    b = estimate_error_probability(cfg(n=30, trials=40_000, mode=SimMode.ENUMERATOR, seed=5, rao_blackwell=False))
    assert abs(a.p_hat - b.p_hat) <= 3 * math.hypot(a.stderr, b.stderr)
    assert a.stderr < b.stderr


def test_seed_split_self_consistency():
    kw = dict(n=60, list=FixedL(4), trials=100_000)
    a = estimate_error_probability(cfg(seed=11, **kw))
    b = estimate_error_probability(cfg(seed=12, **kw))
    assert abs(a.p_hat - b.p_hat) <= 3 * math.hypot(a.stderr, b.stderr)


def test_list_orderings():
    kw = dict(n=30, trials=30_000, mode=SimMode.ENUMERATOR)
    one = estimate_error_probability(cfg(**kw))
    four = estimate_error_probability(cfg(list=FixedL(4), **kw))
    det = estimate_error_probability(cfg(list=FixedL(4), decoder=Decoder.DETERMINISTIC, **kw))
    assert four.p_hat <= one.p_hat + 3 * math.hypot(one.stderr, four.stderr)
    assert det.p_hat <= four.p_hat + 3 * math.hypot(det.stderr, four.stderr)


def test_exponential_list_size():
    c = cfg(list=ExpLambda(0.05), n=40)
    assert c.list_size == math.floor(math.exp(2.0))
    with pytest.raises(ValueError):
        cfg(list=ExpLambda(1.0), n=40)  # e^40 > 2^32


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(rate=0.01, n=20)  # M = 1
    with pytest.raises(ValueError):
        cfg(trials=0)
    with pytest.raises(ValueError):
        cfg(seed=-1)
    with pytest.raises(ValueError):
        cfg(q=Dist([0.2, 0.3, 0.5]), n=2)


def test_estimate_fields():
    e = estimate_error_probability(cfg(trials=2000))
    d = e.to_dict()
    assert set(d) == {"p_hat", "stderr", "trials", "errors_observed", "empirical_exponent"}
    assert 0 <= e.p_hat <= 1 and e.trials == 2000
    assert e.empirical_exponent == pytest.approx(-math.log(e.p_hat) / 20)


def test_raw_estimator_stderr_is_binomial():
    e = estimate_error_probability(cfg(trials=3000, rao_blackwell=False))
    assert e.stderr == pytest.approx(math.sqrt(e.p_hat * (1 - e.p_hat) / 3000))
    assert e.errors_observed == round(e.p_hat * 3000)


# ---------------------------------------------------------------- exponent fit


def _synthetic(ns, slope, rel_noise=0.0, seed=0):
    r = rng(seed)
    out = []
    for n in ns:
        p = math.exp(-slope * n) * math.exp(rel_noise * r.normal()) if rel_noise else math.exp(-slope * n)
        se = rel_noise * p if rel_noise else p * 1e-3
        out.append(SimEstimate(p, se, 10**6, 1000, -math.log(p) / n))
    return out


def test_fit_exact_exponential():
    ns = [10, 20, 40]
    fit = fit_exponent(ns, _synthetic(ns, 0.3))
    assert fit.slope == pytest.approx(0.3, abs=1e-12)
    assert fit.intercept == pytest.approx(0.0, abs=1e-10)


def test_fit_with_noise_covers_truth():
    ns = [20, 40, 60, 80]
    hits = 0
    for s in range(200):
        fit = fit_exponent(ns, _synthetic(ns, 0.1, rel_noise=0.05, seed=s))
        hits += fit.slope_ci[0] <= 0.1 <= fit.slope_ci[1]
    assert 180 <= hits <= 199  # nominal 95 %


def test_fit_drops_sparse_points():
    ns = [10, 20, 40]
    pts = _synthetic(ns, 0.2)
    pts[2] = SimEstimate(pts[2].p_hat, pts[2].stderr, 10**6, 3, None)
    fit = fit_exponent(ns, pts)
    assert fit.dropped == (40,) and fit.n_used == (10, 20)
    with pytest.raises(ValueError):
        fit_exponent([10, 20], [pts[0], pts[2]])


def test_estimate_exponent_runs():
    fit = estimate_exponent(cfg(trials=4000, rate=0.2 * LN2), [10, 20, 30])
    assert fit.slope > 0
    assert len(fit.points) == 3
    with pytest.raises(ValueError):
        estimate_exponent(cfg(), [10, 20])
