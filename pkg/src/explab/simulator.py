"""Monte Carlo simulation of randomised and deterministic list decoding.

Codewords are drawn uniformly from the type class of Q_n, sent through the
channel, and decoded with the metric u = exp(n g(joint type)). Two engines
produce the same distribution of (transmitted score, competitor scores):

* ``explicit``: a literal codebook of M words, one joint type per word.
* ``enumerator``: for large M the competitors are summarised by how many
  of them land in each conditional type class given y. Those counts are
  Multinomial(M - 1, p) with p(K) = prod_y c_y! / prod_xy K_xy! divided by
  |T(Q_n)|, which is exact and independent of M's size.

The randomised decoder's conditional error given (codebook, y) is
(1 - softmax_1)^L; averaging it instead of a sampled indicator
(Rao-Blackwellisation) keeps the estimator unbiased with lower variance.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from .exponents.list_exponents import ExpLambda, FixedL
from .metrics import MetricSpec, eval_metric
from .probability import Dist, Dmc, InfeasibleError, TypeDist, enumerate_joint_types, quantize_to_type

log = logging.getLogger(__name__)

LIST_CAP = 2**32
EXPLICIT_WORK_CAP = 50_000_000  # M * n symbols held per codebook
CHUNK_TRIALS = 2048


class Decoder(str, Enum):
    RANDOMIZED = "randomized"
    DETERMINISTIC = "deterministic"


class SimMode(str, Enum):
    AUTO = "auto"
    EXPLICIT = "explicit"
    ENUMERATOR = "enumerator"


@dataclass(frozen=True)
class SimConfig:
    channel: Dmc
    q: Dist
    n: int
    rate: float  # nats per symbol
    metric: MetricSpec
    list: FixedL | ExpLambda = FixedL(1)
    decoder: Decoder = Decoder.RANDOMIZED
    trials: int = 10_000
    codebooks_per_trial_batch: int = 1
    seed: int = 0
    rao_blackwell: bool = True
    mode: SimMode = SimMode.AUTO

    def __post_init__(self):
        object.__setattr__(self, "decoder", Decoder(self.decoder))
        object.__setattr__(self, "mode", SimMode(self.mode))
        if self.n < 1 or self.trials < 1 or self.codebooks_per_trial_batch < 1:
            raise ValueError("n, trials and batch size must be positive")
        if self.rate < 0:
            raise ValueError("rate must be non-negative")
        if self.M < 2:
            raise ValueError(f"M = floor(e^(nR)) = {self.M} < 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.list_size > LIST_CAP:
            raise ValueError(f"list size {self.list_size} exceeds the cap 2^32")
        quantize_to_type(self.q, self.n)  # raises when n cannot carry the support

    @property
    def M(self) -> int:
        return math.floor(math.exp(self.n * self.rate) * (1 + 1e-12))

    @property
    def list_size(self) -> int:
        if isinstance(self.list, FixedL):
            return int(self.list.L)
        return math.floor(math.exp(self.n * self.list.lam) * (1 + 1e-12))

    def resolved_mode(self) -> SimMode:
        if self.mode is not SimMode.AUTO:
            return self.mode
        return SimMode.EXPLICIT if self.M * self.n <= 2_000_000 else SimMode.ENUMERATOR


@dataclass(frozen=True)
class SimEstimate:
    p_hat: float
    stderr: float
    trials: int
    errors_observed: int
    empirical_exponent: float | None = None

    def to_dict(self) -> dict:
        return {"p_hat": self.p_hat, "stderr": self.stderr, "trials": self.trials,
                "errors_observed": self.errors_observed,
                "empirical_exponent": self.empirical_exponent}


# --------------------------------------------------------------------------
# primitives
# --------------------------------------------------------------------------


def generate_codeword(q_type: TypeDist, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the type class: a random permutation of the multiset."""
    symbols = np.repeat(np.arange(q_type.counts.size), q_type.counts)
    return rng.permutation(symbols)


def _codebook(q_type: TypeDist, M: int, rng: np.random.Generator) -> np.ndarray:
    symbols = np.repeat(np.arange(q_type.counts.size), q_type.counts)
    return rng.permuted(np.broadcast_to(symbols, (M, symbols.size)), axis=1)


def channel_sample(w: Dmc, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """y_i ~ W(.|x_i) independently (works on any array shape)."""
    x = np.asarray(x)
    if x.size and (x.min() < 0 or x.max() >= w.matrix.shape[0]):
        raise ValueError("input symbol out of range")
    cdf = np.cumsum(w.matrix, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(x.shape)
    y = (u[..., None] > cdf[x]).sum(axis=-1)
    return np.minimum(y, w.matrix.shape[1] - 1)


def joint_counts(codebook: np.ndarray, y: np.ndarray, nx: int, ny: int) -> np.ndarray:
    """Joint-type count matrices, shape (M, nx, ny), of every codeword with y."""
    cb = np.atleast_2d(codebook)
    M, n = cb.shape
    idx = cb * ny + np.asarray(y)[None, :] + (np.arange(M) * nx * ny)[:, None]
    return np.bincount(idx.ravel(), minlength=M * nx * ny).reshape(M, nx, ny)


def _scores(g: MetricSpec, codebook: np.ndarray, y: np.ndarray, nx: int, ny: int) -> np.ndarray:
    n = np.atleast_2d(codebook).shape[1]
    counts = joint_counts(codebook, y, nx, ny)
    return n * np.asarray(eval_metric(g, counts / n))


def _nx_ny(g: MetricSpec, codebook: np.ndarray, y: np.ndarray) -> tuple[int, int]:
    if g.channel is not None:
        return g.channel.matrix.shape
    return int(np.max(codebook)) + 1, int(np.max(y)) + 1


def _tie_key(scores: np.ndarray) -> np.ndarray:
    """Scores rounded so that mathematically equal metrics compare as ties."""
    scores = np.asarray(scores, float)
    with np.errstate(invalid="ignore"):
        return np.where(np.isfinite(scores), np.round(scores, 9), scores)


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    if not np.isfinite(scores).any():
        raise ValueError("every codeword has metric -inf: decoding distribution undefined")
    return scores - logsumexp(scores)


def decode_randomized_list(codebook: np.ndarray, y: np.ndarray, g: MetricSpec, L: int,
                           rng: np.random.Generator, shape: tuple[int, int] | None = None) -> np.ndarray:
    """L i.i.d. draws from the softmax of n g(joint type) over the codebook."""
    nx, ny = shape or _nx_ny(g, codebook, y)
    probs = np.exp(_log_softmax(_scores(g, codebook, y, nx, ny)))
    return rng.choice(len(probs), size=int(L), p=probs / probs.sum())


def decode_deterministic_list(codebook: np.ndarray, y: np.ndarray, g: MetricSpec, L: int,
                              shape: tuple[int, int] | None = None) -> np.ndarray:
    """Indices of the L highest metrics, ties to the lowest index."""
    M = np.atleast_2d(codebook).shape[0]
    if L > M:
        raise ValueError(f"list size {L} exceeds the number of messages {M}")
    nx, ny = shape or _nx_ny(g, codebook, y)
    s = _tie_key(_scores(g, codebook, y, nx, ny))
    order = np.lexsort((np.arange(M), -s))
    return np.sort(order[:L])


# --------------------------------------------------------------------------
# per-chunk engines
# --------------------------------------------------------------------------


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, chunk])))


_TINY_P = 1e-15


def _binomial(rng: np.random.Generator, n: int, p: float) -> int:
    """Binomial draw that stays exact for p below the double-precision gap of 1.

    numpy's inversion branch (n p <= 30) forms 1 - p, which rounds to 1 for
    p < 2^-54 and then always returns 0.
    """
    if p >= _TINY_P or n * p > 30:
        return int(rng.binomial(n, p))
    u = rng.random()
    pmf = math.exp(n * math.log1p(-p))
    cdf, k, ratio = pmf, 0, p / (1 - p)
    while u > cdf and k < n and pmf > 0:
        pmf *= (n - k) / (k + 1) * ratio
        k += 1
        cdf += pmf
    return k


def _multinomial(rng: np.random.Generator, n: int, p: np.ndarray) -> np.ndarray:
    """Multinomial draw for probabilities sorted ascending, exact for tiny cells.

    Cells below the threshold are drawn as one block with ``_binomial`` and
    split recursively; the rest go to numpy.
    """
    m = int(np.searchsorted(p, _TINY_P))
    if m == 0:
        return rng.multinomial(n, p)
    out = np.zeros(p.size, dtype=np.int64)
    rare = float(p[:m].sum())
    k = _binomial(rng, n, rare)
    if k:
        out[:m] = _multinomial(rng, k, p[:m] / rare)
    common = p[m:]
    out[m:] = rng.multinomial(n - k, common / common.sum())
    return out


def _explicit_chunk(cfg: SimConfig, q_type: TypeDist, trials: int, rng) -> np.ndarray:
    nx, ny = cfg.channel.matrix.shape
    M, L = cfg.M, cfg.list_size
    if M * cfg.n > EXPLICIT_WORK_CAP:
        raise MemoryError(f"explicit codebook of {M} x {cfg.n} symbols exceeds the cap")
    out = np.empty(trials)
    t = 0
    while t < trials:
        book = _codebook(q_type, M, rng)
        for _ in range(min(cfg.codebooks_per_trial_batch, trials - t)):
            m = int(rng.integers(M))
            y = channel_sample(cfg.channel, book[m], rng)
            scores = _scores(cfg.metric, book, y, nx, ny)
            if cfg.decoder is Decoder.DETERMINISTIC:
                if L >= M:
                    out[t] = 0.0
                else:
                    # m survives iff fewer than L words beat it, counting earlier ties
                    key = _tie_key(scores)
                    ahead = np.count_nonzero(key > key[m]) + np.count_nonzero(key[:m] == key[m])
                    out[t] = float(ahead >= L)
            else:
                logp = _log_softmax(scores)
                w = np.exp(scores - scores.max())
                miss = float(np.delete(w, m).sum() / w.sum())
                if cfg.rao_blackwell:
                    out[t] = miss ** L
                elif L <= 4096:
                    lst = rng.choice(M, size=L, p=np.exp(logp))
                    out[t] = float(not np.any(lst == m))
                else:
                    out[t] = float(_binomial(rng, L, math.exp(logp[m])) == 0)
            t += 1
    return out


@lru_cache(maxsize=256)
def _conditional_types(cols: tuple[int, ...], rows: tuple[int, ...]):
    """Joint count matrices with the given margins and their class probabilities."""
    nx, ny = len(rows), len(cols)
    n = sum(rows)
    tables = np.array([t.counts for t in enumerate_joint_types(nx, ny, n, np.array(rows), np.array(cols))])
    log_p = (sum(gammaln(c + 1) for c in cols) - gammaln(tables + 1).sum(axis=(1, 2))
             - (gammaln(n + 1) - sum(gammaln(r + 1) for r in rows)))
    p = np.exp(log_p - logsumexp(log_p))
    # ascending order: sequential binomial samplers give the last cell the roundoff remainder
    order = np.argsort(p, kind="stable")
    return tables[order], p[order]


def _enumerator_chunk(cfg: SimConfig, q_type: TypeDist, trials: int, rng) -> np.ndarray:
    nx, ny = cfg.channel.matrix.shape
    n, M, L = cfg.n, cfg.M, cfg.list_size
    if M - 1 > np.iinfo(np.int64).max:
        raise OverflowError("M - 1 does not fit a 64-bit count")
    rows = tuple(int(c) for c in q_type.counts)
    x = _codebook(q_type, trials, rng)
    y = channel_sample(cfg.channel, x, rng)
    own = np.zeros((trials, nx, ny), dtype=np.int64)
    np.add.at(own, (np.repeat(np.arange(trials), n), x.ravel(), y.ravel()), 1)
    s1 = n * np.asarray(eval_metric(cfg.metric, own / n))
    col_counts = own.sum(axis=1)
    out = np.empty(trials)
    for t in range(trials):
        tables, p = _conditional_types(tuple(int(c) for c in col_counts[t]), rows)
        counts = _multinomial(rng, M - 1, p)
        scores = n * np.asarray(eval_metric(cfg.metric, tables / n))
        if cfg.decoder is Decoder.DETERMINISTIC:
            if L >= M:
                out[t] = 0.0
                continue
            key, own_key = _tie_key(scores), _tie_key(s1[t])
            above = int(counts[key > own_key].sum())
            ties = int(counts[key == own_key].sum())
            # the transmitted word sits uniformly among its ties
            out[t] = float(above + int(rng.integers(ties + 1)) >= L)
            continue
        hit = (counts > 0) & np.isfinite(scores)
        if not math.isfinite(s1[t]) and not hit.any():
            raise ValueError("every codeword has metric -inf: decoding distribution undefined")
        # one draw misses message 1 with probability S / (S + u1); weights are shifted by the top score
        top = max(s1[t], scores[hit].max()) if hit.any() else s1[t]
        others = float(counts[hit] @ np.exp(scores[hit] - top))
        own_w = math.exp(s1[t] - top) if math.isfinite(s1[t]) else 0.0
        miss = others / (others + own_w)
        if cfg.rao_blackwell:
            out[t] = miss ** L
        else:
            out[t] = float(_binomial(rng, L, own_w / (others + own_w)) == 0)
    return out


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("EXPLAB_THREADS", "1")))
    except ValueError:
        return 1


def estimate_error_probability(cfg: SimConfig) -> SimEstimate:
    """Average list-error probability over codebooks, messages and channel noise.

    Trials are split into fixed chunks with independent PCG64 streams seeded
    by (seed, chunk index), so results do not depend on the thread count.
    """
    q_type = quantize_to_type(cfg.q, cfg.n)
    mode = cfg.resolved_mode()
    engine = _explicit_chunk if mode is SimMode.EXPLICIT else _enumerator_chunk
    sizes = [min(CHUNK_TRIALS, cfg.trials - s) for s in range(0, cfg.trials, CHUNK_TRIALS)]

    def run(c: int) -> np.ndarray:
        return engine(cfg, q_type, sizes[c], _chunk_rng(cfg.seed, c))

    workers = min(_threads(), len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(c) for c in range(len(sizes))]
    vals = np.concatenate(parts)
    p_hat = math.fsum(vals) / vals.size  # correctly rounded, so constant trials stay exact
    T = vals.size
    graded = cfg.rao_blackwell and cfg.decoder is Decoder.RANDOMIZED
    if graded:
        stderr = float(vals.std(ddof=1) / math.sqrt(T)) if T > 1 else 0.0
        errors = int(round(float(vals.sum())))
    else:
        stderr = math.sqrt(p_hat * (1 - p_hat) / T)
        errors = int(vals.sum())
    expo = -math.log(p_hat) / cfg.n if p_hat > 0 else None
    return SimEstimate(p_hat, stderr, T, errors, expo)


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    slope_stderr: float
    slope_ci: tuple[float, float]
    n_used: tuple[int, ...]
    points: tuple[SimEstimate, ...]
    dropped: tuple[int, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "slope_stderr": self.slope_stderr,
                "slope_ci": list(self.slope_ci), "n": list(self.n_used), "dropped": list(self.dropped),
                "points": [p.to_dict() for p in self.points]}


def fit_exponent(ns, estimates, min_errors: int = 30, level: float = 0.95) -> ExponentFit:
    """Weighted least squares of -ln p_hat on n.

    Each point is weighted by 1 / var(-ln p_hat) ~ (p_hat / stderr)^2 (delta
    method); the slope standard error uses these known variances, so the
    interval is a normal one.
    """
    ns = list(ns)
    keep = [i for i, e in enumerate(estimates) if e.p_hat > 0 and e.errors_observed >= min_errors]
    dropped = tuple(ns[i] for i in range(len(ns)) if i not in keep)
    for n in dropped:
        log.warning("n=%d dropped: too few error events", n)
    if len(keep) < 2:
        raise ValueError("need at least two block lengths with enough error events")
    x = np.array([ns[i] for i in keep], float)
    est = [estimates[i] for i in keep]
    yv = np.array([-math.log(e.p_hat) for e in est])
    var = np.array([(e.stderr / e.p_hat) ** 2 if e.stderr > 0 else 0.0 for e in est])
    if np.all(var > 0):
        w = 1.0 / var
    else:
        w = np.ones_like(x)
    X = np.column_stack([np.ones_like(x), x])
    cov = np.linalg.inv(X.T @ (w[:, None] * X))
    beta = cov @ X.T @ (w * yv)
    se = float(math.sqrt(cov[1, 1])) if np.all(var > 0) else 0.0
    z = float(stats.norm.ppf(0.5 + level / 2))
    slope = float(beta[1])
    return ExponentFit(slope, float(beta[0]), se, (slope - z * se, slope + z * se),
                       tuple(int(v) for v in x), tuple(estimates), dropped)


def estimate_exponent(cfg: SimConfig, n_grid, min_errors: int = 30) -> ExponentFit:
    """Simulate at each block length in ``n_grid`` and fit the exponent."""
    ns = sorted(int(n) for n in n_grid)
    if len(ns) < 3 or len(set(ns)) != len(ns):
        raise ValueError("need at least three distinct block lengths")
    estimates = [estimate_error_probability(replace(cfg, n=n)) for n in ns]
    return fit_exponent(ns, estimates, min_errors)
