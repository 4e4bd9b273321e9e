"""Scalar toolkit for the list-decoding asymptotics.

The threshold xi*(L), Lambert W, exact binomial tails, the integral
exponent [B-A]_+ + L[C-[A-B]_+]_+ with a finite-n evaluator, the two
exponent integrands E^_a and E^_b, and a checker for the moment bound
E[X^L] <= min_xi xi^(L-1) E[X] + P(X > xi).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import betainc, gammaln, lambertw, logsumexp

from .metrics import MetricSpec, eval_metric, metric_gap
from .probability import Dist, mutual_information_array
from .exponents.solver import SolverConfig, minimize_over_joint

MAX_TRIALS = 2**63 - 1
_EXACT_SUM_LIMIT = 100_000


def _pos(x: float) -> float:
    return x if x > 0 else 0.0


# --------------------------------------------------------------------------
# xi*(L) and Lambert W
# --------------------------------------------------------------------------


def xi_star(L: float) -> float:
    """Root of xi^L + xi - 1 on [0, 1]."""
    if not L >= 1:
        raise ValueError("L must be at least 1")
    if L == 1:
        return 0.5
    return brentq(lambda x: x**L + x - 1.0, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                  maxiter=500)


def lambert_w0(x: float) -> float:
    """Principal branch W(x) for x >= 0."""
    if x < 0:
        raise ValueError("lambert_w0 is only provided on x >= 0")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return math.inf
    return float(lambertw(x, 0).real)


# --------------------------------------------------------------------------
# binomial tails
# --------------------------------------------------------------------------


def binomial_log_tail(m: int, p: float, t: float) -> float:
    """ln P(X >= t) for X ~ Bin(m, p); -inf when the event is impossible."""
    m = int(m)
    if m < 0 or not 0.0 <= p <= 1.0:
        raise ValueError("need m >= 0 and p in [0, 1]")
    k = math.ceil(t) if math.isfinite(t) else t
    if k <= 0:
        return 0.0
    if k > m:
        return -math.inf
    if p == 0.0:
        return -math.inf
    if p == 1.0:
        return 0.0
    k = int(k)
    if m <= _EXACT_SUM_LIMIT:
        j = np.arange(k, m + 1, dtype=float)
        logpmf = (gammaln(m + 1) - gammaln(j + 1) - gammaln(m - j + 1)
                  + j * math.log(p) + (m - j) * math.log1p(-p))
        return float(min(0.0, logsumexp(logpmf)))
    # P(X >= k) = I_p(k, m - k + 1); the deep tail underflows, sum it in logs instead
    val = float(betainc(k, m - k + 1, p))
    if val > 1e-250:
        return math.log(val)
    return _log_tail_sum(m, p, k)


def _stirling_tail(n: float) -> float:
    return 1 / (12 * n) - 1 / (360 * n**3) + 1 / (1260 * n**5)


def _log_binom(m: int, k: int) -> float:
    """ln C(m, k) without the cancellation of lgamma differences at huge m."""
    j = min(k, m - k)
    if j == 0:
        return 0.0
    if j <= 1000:
        i = np.arange(1, j + 1, dtype=float)
        return float(np.sum(np.log1p((m - j) / i)))
    r = m - k
    return (k * math.log(m) - (r + 0.5) * math.log1p(-k / m) - (k + 0.5) * math.log(k)
            - 0.5 * math.log(2 * math.pi) + _stirling_tail(m) - _stirling_tail(k) - _stirling_tail(r))


def _log_tail_sum(m: int, p: float, k: int, chunk: int = 8192) -> float:
    """ln sum_{j >= k} pmf(j) by the ratio recursion; for k above the mean."""
    log_odds = math.log(p) - math.log1p(-p)
    head = _log_binom(m, k) + k * math.log(p) + (m - k) * math.log1p(-p)
    total = -math.inf
    start, offset = k, 0.0
    while start <= m:
        j = np.arange(start, min(start + chunk, m + 1), dtype=float)
        # log pmf(j) - log pmf(start) = sum_{i<j} ln((m - i) / (i + 1)) + log odds
        steps = np.log((m - j[:-1]) / (j[:-1] + 1)) + log_odds
        logs = head + offset + np.concatenate([[0.0], np.cumsum(steps)])
        total = np.logaddexp(total, logsumexp(logs))
        if logs[-1] < total - 50 or j[-1] == m:
            break
        offset = logs[-1] - head + float(np.log((m - j[-1]) / (j[-1] + 1)) + log_odds)
        start = int(j[-1]) + 1
    return float(total)


def binomial_tail_prob(m: int, p: float, t: float) -> float:
    """P(X >= t) for X ~ Bin(m, p)."""
    return math.exp(binomial_log_tail(m, p, t))


@dataclass(frozen=True)
class TailQuery:
    R: float
    I: float
    C: float

    def __post_init__(self):
        if self.R < 0 or self.I < 0:
            raise ValueError("R and I must be non-negative")


def binomial_tail_exponent(q: TailQuery) -> float:
    """[I - R]_+ when [R - I]_+ >= C, +inf otherwise."""
    if _pos(q.R - q.I) >= q.C:
        return _pos(q.I - q.R)
    return math.inf


# --------------------------------------------------------------------------
# integral exponent
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IntegralParams:
    A: float
    B: float
    C: float
    L: int
    n: int = 100

    def __post_init__(self):
        if self.A < 0 or self.B < 0:
            raise ValueError("A and B must be non-negative")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("L must be a positive integer")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")


def integral_exponent_closed_form(p: IntegralParams) -> float:
    """[B - A]_+ + L [C - [A - B]_+]_+."""
    return _pos(p.B - p.A) + p.L * _pos(p.C - _pos(p.A - p.B))


def integral_log_value(p: IntegralParams, rel_tol: float = 1e-6) -> float:
    """ln of int_0^inf e^{-nL theta} P(N >= e^{n(C - theta)}) d theta, N ~ Bin(floor e^{nA}, e^{-nB}).

    The integrand is a step function of theta: with k = ceil(e^{n(C - theta)})
    it equals e^{-nL theta} P(N >= k), and k is constant on
    theta in [C - ln(k)/n, C - ln(k-1)/n). Runs of k are integrated exactly
    against e^{-nL theta} and bracketed by the tail at their two ends; the
    run with the widest bracket is split until the total bracket is below
    ``rel_tol`` relative.
    """
    n, L = p.n, p.L
    if n * p.A > math.log(MAX_TRIALS):
        raise OverflowError(f"trial count e^(nA) = e^{n * p.A:.3g} exceeds 2^63 - 1")
    m = math.floor(math.exp(n * p.A))
    prob = math.exp(-n * p.B)
    nl = n * L
    # theta(k) lower edge of the run where ceil(e^{n(C-theta)}) = k
    def theta(k: int) -> float:
        if k == 0:
            return math.inf
        return max(0.0, p.C - math.log(k) / n)

    k_top = m
    if p.C < math.log(max(m, 1)) / n + 1.0:
        k_top = min(m, math.ceil(math.exp(n * p.C)))
    if k_top < 1:
        return -math.log(nl)  # the threshold is below one for every theta >= 0: tail is 1

    @lru_cache(maxsize=None)
    def log_s(k: int) -> float:
        return binomial_log_tail(m, prob, k)

    def log_weight(ka: int, kb: int) -> float:
        lo, hi = theta(kb), theta(ka - 1)
        if hi <= lo:
            return -math.inf
        if math.isinf(hi):
            return -nl * lo - math.log(nl)
        return -nl * lo + math.log(-math.expm1(-nl * (hi - lo))) - math.log(nl)

    def bracket(ka: int, kb: int):
        w = log_weight(ka, kb)
        return w + log_s(kb), w + log_s(ka)

    # runs with theta(k) = 0 all share the same bottom edge; k_top covers them
    heap: list[tuple[float, int, int, float, float]] = []
    lo_total, hi_total = [], []

    def push(ka: int, kb: int):
        lo, hi = bracket(ka, kb)
        heapq.heappush(heap, (-_log_diff(hi, lo), ka, kb, lo, hi))

    push(1, 1)
    if k_top > 1:
        push(2, k_top)
    for _ in range(200_000):
        lows = [e[3] for e in heap]
        highs = [e[4] for e in heap]
        tot_lo, tot_hi = logsumexp(lows), logsumexp(highs)
        if not math.isfinite(tot_lo) and not math.isfinite(tot_hi):
            return -math.inf
        if math.isfinite(tot_lo) and _log_diff(tot_hi, tot_lo) - tot_lo <= math.log(rel_tol):
            return float(tot_lo + math.log1p(math.exp(_log_diff(tot_hi, tot_lo) - tot_lo) / 2))
        _, ka, kb, lo, hi = heapq.heappop(heap)
        if ka == kb:
            heapq.heappush(heap, (math.inf, ka, kb, lo, hi))  # exact; cannot refine
            continue
        mid = max(ka, min(kb - 1, int(math.sqrt(ka * kb))))
        push(ka, mid)
        push(mid + 1, kb)
    raise RuntimeError("integral bracket did not converge")


def _log_diff(a: float, b: float) -> float:
    """ln(e^a - e^b) for a >= b; -inf when equal."""
    if b == -math.inf:
        return a
    if a <= b:
        return -math.inf
    return a + math.log(-math.expm1(b - a))


def integral_exponent_numeric(p: IntegralParams) -> float:
    """-(1/n) ln of the finite-n integral."""
    return -integral_log_value(p) / p.n


# --------------------------------------------------------------------------
# exponent integrands
# --------------------------------------------------------------------------


def e_hat_a(p, p_tilde, R: float, L: float, g: MetricSpec) -> float:
    """[I(P~) - R]_+ + L [g(P) - g(P~) - [R - I(P~)]_+]_+."""
    pt = p_tilde.probs if hasattr(p_tilde, "probs") else np.asarray(p_tilde, float)
    i_t = float(mutual_information_array(pt))
    gap = metric_gap(g, p, p_tilde)
    return _pos(i_t - R) + L * _pos(gap - _pos(R - i_t))


def e_hat_b(q: Dist, p_y: Dist, g: MetricSpec, cfg: SolverConfig = SolverConfig()) -> float:
    """min of I(P~) - g(P~) over P~ with marginals (q, p_y)."""
    def objective(joints):
        with np.errstate(invalid="ignore"):
            return mutual_information_array(joints) - np.asarray(eval_metric(g, joints))

    _, val = minimize_over_joint(objective, q, p_y, cfg)
    return val


# --------------------------------------------------------------------------
# moment bound
# --------------------------------------------------------------------------


def verify_xl_lemma(atoms, weights, L: float, resolution: float = 1e-4) -> tuple[float, float]:
    """(E[X^L], min over a xi grid of xi^(L-1) E[X] + P(X > xi))."""
    x = np.asarray(atoms, float)
    w = np.asarray(weights, float)
    if x.shape != w.shape or x.ndim != 1:
        raise ValueError("atoms and weights must be 1-D of equal length")
    if (x < 0).any() or (x > 1).any():
        raise ValueError("atoms must lie in [0, 1]")
    if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must form a probability vector")
    lhs = float(w @ x**L)
    mean = float(w @ x)
    xi = np.linspace(0.0, 1.0, int(round(1.0 / resolution)) + 1)
    # P(X > xi) on the grid via the sorted atoms
    order = np.argsort(x)
    xs, cw = x[order], np.cumsum(w[order])
    idx = np.searchsorted(xs, xi, side="right")
    above = 1.0 - np.where(idx > 0, cw[np.maximum(idx - 1, 0)], 0.0)
    rhs = xi ** (L - 1) * mean + np.maximum(above, 0.0)
    return lhs, float(rhs.min())
