"""Random-coding, sphere-packing and modified random-coding exponents.

All three are convex programs in the conditional V = P_{Y|X} (D and I_P are
convex in V for fixed Q), so they are solved through their Lagrangian
duals. For a multiplier rho >= 0,

    E0(rho) = min_V  D(Q V || Q x W) + rho I(Q, V)
            = min_r  -(1 + rho) sum_x Q(x) ln sum_y W(y|x)^(1/(1+rho)) r(y)^(rho/(1+rho)),

computed by alternating minimisation over (V, r). Then

    E_r(R)        = max_{0 <= rho <= 1} E0(rho) - rho R
    E~_1(R, L)    = max_{0 <= rho <= L} E0(rho) - rho R
    E_sp(R)       = sup_{rho >= 0}      E0(rho) - rho R

E0 is concave with slope I(Q, V*_rho) (envelope theorem), so the maximiser
is found by bisection on the sign of I(Q, V*_rho) - R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..probability import Dist, Dmc, ShapeError, mutual_information_array
from .solver import SolverError

RHO_CAP = 1e8


@dataclass(frozen=True)
class DualSolution:
    value: float
    rho: float
    joint: np.ndarray | None  # minimising P_XY at rho (None when value is inf)


class _Dual:
    """E0 evaluator for one (W, Q) pair, warm-started across calls."""

    def __init__(self, w: Dmc, q: Dist, tol: float = 1e-15, max_iter: int = 200_000):
        if q.size != w.matrix.shape[0]:
            raise ShapeError("input distribution and channel disagree on |X|")
        self.q_full = q.probs
        rows = q.probs > 0
        w_rows = w.matrix[rows]
        cols = w_rows.sum(axis=0) > 0
        self.rows, self.cols = rows, cols
        self.q = q.probs[rows]
        self.w = w_rows[:, cols]
        self.shape = w.matrix.shape
        self.tol = tol
        self.max_iter = max_iter
        self._r = self.q @ self.w
        self._cache: dict[float, tuple[float, np.ndarray]] = {}

    def _embed(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape)
        sub = np.zeros((self.rows.sum(), self.shape[1]))
        sub[:, self.cols] = self.q[:, None] * v
        out[self.rows] = sub
        return out

    def e0(self, rho: float) -> tuple[float, np.ndarray]:
        """(E0(rho), minimising conditional V on the reduced alphabets)."""
        if rho in self._cache:
            return self._cache[rho]
        if rho == 0:
            res = (0.0, self.w.copy())
            self._cache[rho] = res
            return res
        s = 1.0 / (1.0 + rho)
        a = np.where(self.w > 0, self.w, 0.0) ** s
        r = self._r.copy()
        prev = math.inf
        for _ in range(self.max_iter):
            b = r ** (rho * s)
            z = a @ b
            val = -(1.0 + rho) * float(self.q @ np.log(z))
            v = a * b / z[:, None]
            r = self.q @ v
            if prev - val <= self.tol * max(1.0, abs(val)):
                break
            prev = val
        else:
            raise SolverError(f"E0 iteration did not converge at rho={rho}")
        self._r = r
        res = (val, v)
        if len(self._cache) < 4096:
            self._cache[rho] = res
        return res

    def slope(self, rho: float) -> float:
        """dE0/drho = I(Q, V*_rho)."""
        _, v = self.e0(rho)
        return float(mutual_information_array(self.q[:, None] * v))

    def min_rate(self) -> float:
        """Smallest I(Q, V) over V absolutely continuous w.r.t. W (rho -> inf)."""
        mask = (self.w > 0).astype(float)
        r = self._r.copy()
        prev = math.inf
        for _ in range(self.max_iter):
            v = mask * r
            v /= v.sum(axis=1, keepdims=True)
            r = self.q @ v
            val = float(mutual_information_array(self.q[:, None] * v))
            if prev - val <= 1e-15:
                break
            prev = val
        return val

    def joint(self, rho: float) -> np.ndarray:
        return self._embed(self.e0(rho)[1])

    def maximise(self, rate: float, rho_max: float) -> DualSolution:
        """max_{0 <= rho <= rho_max} E0(rho) - rho * rate."""
        if self.slope(0.0) <= rate:
            return DualSolution(0.0, 0.0, self.joint(0.0))
        if self.slope(rho_max) >= rate:
            rho = rho_max
        else:
            lo, hi = 0.0, rho_max
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if self.slope(mid) > rate:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-12 * max(1.0, hi):
                    break
            rho = 0.5 * (lo + hi)
        val = self.e0(rho)[0] - rho * rate
        return DualSolution(max(val, 0.0), rho, self.joint(rho))


_DUALS: dict[tuple, _Dual] = {}


def _dual(w: Dmc, q: Dist) -> _Dual:
    key = (w, q)
    d = _DUALS.get(key)
    if d is None:
        if len(_DUALS) > 64:
            _DUALS.clear()
        d = _DUALS[key] = _Dual(w, q)
    return d


def capacity_term(w: Dmc, q: Dist) -> float:
    """I(Q; W), the rate at which the exponents vanish."""
    return float(mutual_information_array(w.joint(q).probs))


def e0(w: Dmc, q: Dist, rho: float) -> float:
    if rho < 0:
        raise ValueError("rho must be non-negative")
    return _dual(w, q).e0(float(rho))[0]


def random_coding_solution(w: Dmc, q: Dist, rate: float) -> DualSolution:
    return _dual(w, q).maximise(float(rate), 1.0)


def random_coding_exponent(w: Dmc, q: Dist, rate: float) -> float:
    """E_r(R, Q) = min_{P_X=Q} D(P||Q x W) + [I_P - R]_+ (negative R allowed)."""
    return random_coding_solution(w, q, rate).value


def modified_random_coding_exponent(w: Dmc, q: Dist, rate: float, L: float) -> float:
    """min_{P_X=Q} D(P||Q x W) + L [I_P - R]_+ (deterministic fixed-list exponent)."""
    if L < 1:
        raise ValueError("list size must be at least 1")
    return _dual(w, q).maximise(float(rate), float(L)).value


def sphere_packing_solution(w: Dmc, q: Dist, rate: float) -> DualSolution:
    d = _dual(w, q)
    rate = float(rate)
    if rate < 0:
        raise ValueError("sphere-packing exponent is undefined at negative rates")
    r_min = d.min_rate()
    if rate < r_min - 1e-10:
        return DualSolution(math.inf, math.inf, None)
    if rate <= r_min + 1e-12:
        if r_min <= 1e-14:
            # I_P <= 0 forces independence: min over P_Y of sum_x Q(x) D(P_Y || W(.|x))
            with np.errstate(divide="ignore"):
                logw = np.log(d.w)
            geo = np.exp(d.q @ logw)
            return DualSolution(float(-np.log(geo.sum())), math.inf, None)
        return DualSolution(d.e0(RHO_CAP)[0] - RHO_CAP * rate, RHO_CAP, d.joint(RHO_CAP))
    if d.slope(0.0) <= rate:
        return DualSolution(0.0, 0.0, d.joint(0.0))
    hi = 1.0
    while d.slope(hi) > rate:
        hi *= 2.0
        if hi > RHO_CAP:
            return DualSolution(d.e0(RHO_CAP)[0] - RHO_CAP * rate, RHO_CAP, d.joint(RHO_CAP))
    return d.maximise(rate, hi)


def sphere_packing_exponent(w: Dmc, q: Dist, rate: float) -> float:
    """E_sp(R, Q) = min D(P||Q x W) over P_X = Q, I_P <= R; +inf if infeasible."""
    return sphere_packing_solution(w, q, rate).value


def critical_rate(w: Dmc, q: Dist, tol: float = 1e-12) -> float:
    """Smallest R with E_sp(R) = E_r(R).

    E_sp and E_r agree exactly when the sphere-packing multiplier is at most
    one; that predicate is monotone in R and is bisected on [0, I(Q;W)].
    """
    top = capacity_term(w, q)
    if top <= 0:
        raise SolverError("degenerate channel: I(Q;W) = 0, no critical rate")

    def coincide(r: float) -> bool:
        return sphere_packing_solution(w, q, r).rho <= 1.0

    if coincide(0.0):
        return 0.0
    lo, hi = 0.0, top
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if coincide(mid):
            hi = mid
        else:
            lo = mid
    return hi


def critical_rate_envelope(w: Dmc, q: Dist) -> float:
    """R_0 as the slope of E0 at rho = 1, i.e. I(Q, V*_1)."""
    return _dual(w, q).slope(1.0)
