import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from explab.metrics import (IndeterminateError, MetricKind, MetricSpec, eval_metric, metric_gap,
                            metric_gap_array, parse_metric)
from explab.probability import (Dist, Dmc, JointDist, ShapeError, entropy, kl, mutual_information)

BSC = Dmc.bsc(0.1)
UNIFORM = Dist.uniform(2)


def _hy(p):
    return entropy(Dist(np.asarray(p).sum(axis=0)))


def test_eval_examples():
    prod = JointDist.product(Dist([0.3, 0.7]), Dist([0.2, 0.8]))
    assert eval_metric(MetricSpec.mmi(), prod) == pytest.approx(0, abs=1e-15)
    assert eval_metric(MetricSpec.constant(0), prod) == 0.0
    v = eval_metric(MetricSpec.matched(BSC), BSC.joint(UNIFORM))
    assert v == pytest.approx(0.9 * math.log(0.9) + 0.1 * math.log(0.1), abs=1e-15)
    assert round(v, 4) == -0.3251


def test_gap_examples():
    p = BSC.joint(UNIFORM)
    g = MetricSpec.matched(BSC)
    assert metric_gap(g, p, p) == 0.0
    other = JointDist([[0.1, 0.2], [0.3, 0.4]])
    assert metric_gap(MetricSpec.constant(2.5), p, other) == 0.0
    indep = JointDist.product(p.x_marginal(), p.y_marginal())
    # (0.9 - 0.5) ln 0.9 + (0.1 - 0.5) ln 0.1 = 0.4 ln 9
    assert metric_gap(g, p, indep) == pytest.approx(0.4 * math.log(9), abs=1e-14)
    mmi_gap = metric_gap(MetricSpec.mmi(), p, indep)
    assert mmi_gap == pytest.approx(mutual_information(p), abs=1e-14)
    assert round(mmi_gap, 4) == 0.3681  # ln 2 - h(0.1)


def test_minus_infinity_and_indeterminate_gap():
    v = Dmc([[1.0, 0.0], [0.0, 1.0]])
    g = MetricSpec.mismatched(v)
    off = JointDist([[0.5, 0.0], [0.0, 0.5]])
    cross = JointDist([[0.25, 0.25], [0.25, 0.25]])
    assert eval_metric(g, off) == 0.0
    assert eval_metric(g, cross) == -math.inf
    assert metric_gap(g, off, cross) == math.inf
    with pytest.raises(IndeterminateError):
        metric_gap(g, cross, cross)
    assert np.isnan(metric_gap_array(g, cross.probs[None], cross.probs[None]))[0]


def test_alphabet_mismatch():
    with pytest.raises(ShapeError):
        eval_metric(MetricSpec.matched(Dmc.bec(0.1)), BSC.joint(UNIFORM))


def test_spec_validation_and_parsing():
    with pytest.raises(ValueError):
        MetricSpec(MetricKind.MATCHED)
    with pytest.raises(ValueError):
        MetricSpec.constant(math.inf)
    assert parse_metric("matched", BSC) == MetricSpec.matched(BSC)
    assert parse_metric("mmi").kind is MetricKind.MMI
    assert parse_metric("mismatched:bsc:0.2") == MetricSpec.mismatched(Dmc.bsc(0.2))
    assert parse_metric("constant:1.5").value == 1.5
    for bad in ("matched", "likelihood", "constant:x"):
        with pytest.raises(ValueError):
            parse_metric(bad)


def test_batched_evaluation_matches_scalar():
    rng = np.random.default_rng(3)
    stack = rng.dirichlet(np.ones(4), size=50).reshape(50, 2, 2)
    for g in (MetricSpec.matched(BSC), MetricSpec.mmi(), MetricSpec.constant(0.3)):
        batch = eval_metric(g, stack)
        assert batch.shape == (50,)
        assert np.allclose(batch, [eval_metric(g, p) for p in stack], atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matched_metric_decomposition(seed):
    # g(P) = I_P - H_P(Y) - D(P || P_X x W); the divergence vanishes on channel-consistent joints
    rng = np.random.default_rng(seed)
    w = Dmc(rng.dirichlet(np.ones(3), size=2))
    p = rng.dirichlet(np.ones(6)).reshape(2, 3)
    g = MetricSpec.matched(w)
    ref = p.sum(axis=1)[:, None] * w.matrix
    lhs = eval_metric(g, p)
    assert lhs == pytest.approx(mutual_information(JointDist(p)) - _hy(p) - kl(JointDist(p), JointDist(ref)),
                                abs=1e-12)
    assert eval_metric(g, ref) == pytest.approx(mutual_information(JointDist(ref)) - _hy(ref), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matched_gap_is_information_difference_on_equal_outputs(seed):
    # two input laws through the same W with the same output law
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(2), size=3)
    q = rng.dirichlet(np.ones(3))
    # the null direction sums to zero, so it has entries of both signs
    null = np.linalg.svd(np.vstack([w.T, np.ones(3)]))[2][-1]
    lo = max(-q[i] / null[i] for i in range(3) if null[i] > 0)
    hi = min(-q[i] / null[i] for i in range(3) if null[i] < 0)
    assert lo <= 0 <= hi
    qt = np.clip(q + rng.uniform(lo, hi) * null, 0, None)
    qt /= qt.sum()
    p, pt = q[:, None] * w, qt[:, None] * w
    assert np.allclose(p.sum(axis=0), pt.sum(axis=0), atol=1e-12)
    g = MetricSpec.matched(Dmc(w))
    gap = metric_gap(g, p, pt)
    assert gap == pytest.approx(mutual_information(JointDist(p)) - mutual_information(JointDist(pt)), abs=1e-12)
