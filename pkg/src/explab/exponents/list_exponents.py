"""Exponents of randomised and deterministic list decoding.

The randomised ones are double minimisations over an outer joint P with
P_X = Q and an inner joint P~ sharing both marginals of P:

    fixed L:      D(P||QxW) + [I~ - R]_+ + L [g(P) - g(P~) - [R - I~]_+]_+
    L = e^{n lam}: D(P||QxW) + [I~ - (R - lam) - (g(P~) - g(P))]_+

The deterministic counterparts reduce to the classical convex programs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..metrics import MetricSpec, eval_metric
from ..probability import Dist, Dmc, ShapeError, kl_array, mutual_information_array
from . import classical
from .solver import (ConditionalCoords, SolverConfig, SolverError, TransportCoords,
                     conditional_lattice, local_search, transport_lattice,
                     transport_lattice_2x2)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FixedL:
    L: int

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("fixed list size must be an integer >= 1")


@dataclass(frozen=True)
class ExpLambda:
    lam: float  # nats per symbol

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("list-size exponent must be non-negative")


@dataclass(frozen=True)
class ExponentQuery:
    channel: Dmc
    q: Dist
    rate: float
    metric: MetricSpec
    list: FixedL | ExpLambda = FixedL(1)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError("rate must be non-negative")
        if self.q.size != self.channel.matrix.shape[0]:
            raise ShapeError("input distribution and channel disagree on |X|")
        ch = self.metric.channel
        if ch is not None and ch.matrix.shape != self.channel.matrix.shape:
            raise ShapeError("metric channel and true channel have different alphabets")

    def with_rate(self, rate: float) -> "ExponentQuery":
        return ExponentQuery(self.channel, self.q, rate, self.metric, self.list, self.solver)


# --------------------------------------------------------------------------
# objective pieces
# --------------------------------------------------------------------------


def _hinge(x):
    return np.maximum(x, 0.0)


def fixed_list_value(D, I_t, gap, rate: float, L: float):
    """D + [I~ - R]_+ + L [gap - [R - I~]_+]_+ with gap = g(P) - g(P~)."""
    with np.errstate(invalid="ignore"):
        v = D + _hinge(I_t - rate) + L * _hinge(gap - _hinge(rate - I_t))
    return np.where(np.isnan(v), np.inf, v)


def exp_list_value(D, I_t, gap, rate: float, lam: float):
    """D + [I~ - (R - lam) + gap]_+."""
    with np.errstate(invalid="ignore"):
        v = D + _hinge(I_t - (rate - lam) + gap)
    return np.where(np.isnan(v), np.inf, v)


class CoupledProblem:
    """Cached lattice of (P, P~) pairs for one channel, input law and metric.

    Everything that does not depend on the rate or the list size (D(P||QxW),
    I(P~), g(P) - g(P~)) is computed once; each query is then a vectorised
    formula over all pairs followed by a local polish.
    """

    def __init__(self, w: Dmc, q: Dist, metric: MetricSpec, cfg: SolverConfig):
        self.w, self.q, self.metric, self.cfg = w, q, metric, cfg
        self.ref = w.joint(q).probs
        nx, ny = self.ref.shape
        outer = conditional_lattice(q.probs, ny, cfg.grid_denominator)
        step = 1.0 / cfg.inner
        if (nx, ny) == (2, 2):
            owner, inner = transport_lattice_2x2(outer, step)
        else:
            owners, inners = [], []
            for k, p in enumerate(outer):
                pts = transport_lattice(p, step)
                owners.append(np.full(len(pts), k))
                inners.append(pts)
            owner, inner = np.concatenate(owners), np.concatenate(inners)
        self.outer = outer
        self.owner = owner
        self.inner = inner
        d_outer = kl_array(outer, self.ref[None])
        g_outer = np.asarray(eval_metric(metric, outer))
        self.D = d_outer[owner]
        self.I_t = mutual_information_array(inner)
        with np.errstate(invalid="ignore"):
            self.gap = g_outer[owner] - np.asarray(eval_metric(metric, inner))
        self.out_coords = ConditionalCoords(q.probs, ny)

    # -- pieces for a single pair -------------------------------------------------

    def terms(self, p: np.ndarray, pt: np.ndarray):
        """(D, I~, gap) for one pair or a stack of pairs; inf - inf gives NaN."""
        d = kl_array(p, self.ref)
        i_t = mutual_information_array(pt)
        with np.errstate(invalid="ignore"):
            gap = np.asarray(eval_metric(self.metric, p)) - np.asarray(eval_metric(self.metric, pt))
        return d, i_t, gap

    def _decode(self, z: np.ndarray, tc: TransportCoords):
        k = self.out_coords.dim
        p = self.out_coords.to_joint(z[..., :k])
        pt = tc.to_joint(z[..., k:], py=p.sum(axis=-2))
        return p, pt

    def _encode(self, p: np.ndarray, pt: np.ndarray, tc: TransportCoords) -> np.ndarray:
        return np.concatenate([self.out_coords.from_joint(p), tc.from_joint(pt, py=p.sum(axis=0))])

    # -- solve -------------------------------------------------------------------

    def solve(self, value_fn, seeds: list[tuple[np.ndarray, np.ndarray]] = ()) -> tuple[float, np.ndarray, np.ndarray]:
        """min over pairs of ``value_fn(D, I~, gap)``; returns (value, P, P~)."""
        vals = value_fn(self.D, self.I_t, self.gap)
        order = np.argsort(vals, kind="stable")
        i0 = int(order[0])
        best = (float(vals[i0]), self.outer[self.owner[i0]], self.inner[i0])
        starts = [(self.outer[self.owner[i]], self.inner[i]) for i in
                  _distinct(vals, order, self.cfg.restarts)]
        starts += list(seeds)
        for p, pt in seeds:
            v = float(value_fn(*self.terms(p, pt)))
            if v < best[0]:
                best = (v, p, pt)
        if not self.cfg.refine or not math.isfinite(best[0]):
            return best
        step = 1.0 / self.cfg.grid_denominator
        for p0, pt0 in starts:
            tc = TransportCoords(self.q.probs, p0.sum(axis=0))

            def f(z, tc=tc):
                return value_fn(*self.terms(*self._decode(z, tc)))

            z, v = local_search(f, self._encode(p0, pt0, tc), step, self.cfg.tolerance)
            if v < best[0]:
                p, pt = self._decode(z, tc)
                best = (v, p, pt)
        return best


def _distinct(vals, order, k):
    out, seen = [], set()
    for i in order:
        if len(out) >= k or not np.isfinite(vals[i]):
            break
        key = round(float(vals[i]), 10)
        if key not in seen:
            seen.add(key)
            out.append(int(i))
    return out


@lru_cache(maxsize=32)
def coupled_problem(w: Dmc, q: Dist, metric: MetricSpec, cfg: SolverConfig) -> CoupledProblem:
    return CoupledProblem(w, q, metric, cfg)


def _warm_seeds(w: Dmc, q: Dist, rate: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """(P*, P*) and (P*, Q x P*_Y) with P* the random-coding minimiser at ``rate``."""
    sol = classical.random_coding_solution(w, q, rate)
    if sol.joint is None:
        return []
    p = sol.joint
    return [(p, p.copy()), (p, np.outer(q.probs, p.sum(axis=0)))]


# --------------------------------------------------------------------------
# public exponents
# --------------------------------------------------------------------------


def randomized_list_exponent_fixed(query: ExponentQuery) -> float:
    """E_1(R, Q, L): randomised list decoding with a fixed list size."""
    if not isinstance(query.list, FixedL):
        raise TypeError("query must carry a FixedL list size")
    return _solve_fixed(query)[0]


def _solve_fixed(query: ExponentQuery):
    prob = coupled_problem(query.channel, query.q, query.metric, query.solver)
    R, L = float(query.rate), float(query.list.L)
    seeds = _warm_seeds(query.channel, query.q, R) if query.solver.warm_start else []
    res = prob.solve(lambda D, I, gap: fixed_list_value(D, I, gap, R, L), seeds)
    if not math.isfinite(res[0]) and res[0] != math.inf:
        raise SolverError("non-finite exponent")
    return res


def randomized_list_exponent_exp(query: ExponentQuery) -> float:
    """E_2(R, Q, lam): achievable exponent with list size e^{n lam}."""
    if not isinstance(query.list, ExpLambda):
        raise TypeError("query must carry an ExpLambda list size")
    return _solve_exp(query)[0]


def _solve_exp(query: ExponentQuery):
    prob = coupled_problem(query.channel, query.q, query.metric, query.solver)
    R, lam = float(query.rate), float(query.list.lam)
    seeds = _warm_seeds(query.channel, query.q, R - lam) if query.solver.warm_start else []
    return prob.solve(lambda D, I, gap: exp_list_value(D, I, gap, R, lam), seeds)


def deterministic_list_exponent_fixed(channel: Dmc, q: Dist, rate: float, L: int,
                                      cfg: SolverConfig | None = None) -> float:
    """E~_1(R, Q, L) = min D(P||QxW) + L [I_P - R]_+."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    return classical.modified_random_coding_exponent(channel, q, rate, L)


def deterministic_list_exponent_exp(channel: Dmc, q: Dist, rate: float, lam: float,
                                    cfg: SolverConfig | None = None) -> float:
    """E~_2(R, Q, lam) = E_sp(R - lam); R < lam is clamped to E_sp(0) and logged."""
    if rate < 0 or lam < 0:
        raise ValueError("rate and lambda must be non-negative")
    shifted = rate - lam
    if shifted < 0:
        log.warning("E_sp at negative rate %.6g clamped to rate 0", shifted)
        shifted = 0.0
    return classical.sphere_packing_exponent(channel, q, shifted)


def random_coding_exponent(channel: Dmc, q: Dist, rate: float, cfg: SolverConfig | None = None) -> float:
    if rate < 0:
        raise ValueError("rate must be non-negative")
    return classical.random_coding_exponent(channel, q, rate)


def sphere_packing_exponent(channel: Dmc, q: Dist, rate: float, cfg: SolverConfig | None = None) -> float:
    return classical.sphere_packing_exponent(channel, q, rate)


def critical_rate(channel: Dmc, q: Dist, cfg: SolverConfig | None = None) -> float:
    return classical.critical_rate(channel, q)
