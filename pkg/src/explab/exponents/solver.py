"""Constrained minimisation over joint distributions.

Two stages. First an exhaustive sweep of a lattice of joints (exact on the
lattice, exponential only in the alphabet sizes); then an optional local
polish of the best lattice points in a coordinate system that keeps the
marginal constraints exact:

* ``P_X = Q`` only: every row of the conditional V(.|x) is a free point of
  the simplex (Euclidean projection keeps it there).
* ``P_X = Q`` and ``P_Y = r``: moves are combinations of the zero-margin
  matrices ``E_ij`` (+1 at (i,j) and at the pivot corner, -1 at (i, pivot
  column) and (pivot row, j)); infeasible moves are pulled back radially to
  the independent coupling ``Q x r``.

The returned value is never above the best lattice point.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from ..probability import Dist, InfeasibleError, JointDist


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    grid_denominator: int = 64
    refine: bool = True
    tolerance: float = 1e-10
    restarts: int = 2
    inner_denominator: int | None = None
    warm_start: bool = True

    def __post_init__(self):
        if self.grid_denominator < 2:
            raise ValueError("grid_denominator must be at least 2")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.restarts < 0:
            raise ValueError("restarts must be non-negative")
        if self.inner_denominator is not None and self.inner_denominator < 1:
            raise ValueError("inner_denominator must be positive")

    @property
    def inner(self) -> int:
        return self.inner_denominator or self.grid_denominator


# --------------------------------------------------------------------------
# simplex helpers
# --------------------------------------------------------------------------


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of ``v`` onto the probability simplex."""
    v = np.asarray(v, float)
    if v.ndim == 1:
        return project_simplex(v[None])[0]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, v.shape[1] + 1)
    cond = u - css / ind > 0
    rho = cond.sum(axis=1)
    theta = css[np.arange(v.shape[0]), rho - 1] / rho
    return np.maximum(v - theta[:, None], 0.0)


def simplex_lattice(size: int, n: int) -> np.ndarray:
    """All points of the simplex with coordinates in (1/n)Z, shape (C, size)."""
    rows = []
    for bars in itertools.combinations(range(n + size - 1), size - 1):
        edges = (-1,) + bars + (n + size - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(size)])
    return np.asarray(rows, dtype=float) / n


def conditional_lattice(q: np.ndarray, ny: int, n: int) -> np.ndarray:
    """Joints Q(x) V(y|x) with every supported row of V an n-type.

    Rows of Q with zero mass carry no freedom and stay zero.
    """
    q = np.asarray(q, float)
    simplex = simplex_lattice(ny, n)
    support = np.flatnonzero(q > 0)
    count = simplex.shape[0] ** len(support)
    if count > 5_000_000:
        raise SolverError(f"lattice of {count} points is too large; lower grid_denominator")
    idx = np.indices((simplex.shape[0],) * len(support)).reshape(len(support), -1).T
    out = np.zeros((idx.shape[0], q.size, ny))
    for k, x in enumerate(support):
        out[:, x, :] = q[x] * simplex[idx[:, k]]
    return out


def northwest_corner(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """The north-west-corner vertex of the transportation polytope."""
    r, c = np.array(px, float), np.array(py, float)
    out = np.zeros((r.size, c.size))
    i = j = 0
    while i < r.size and j < c.size:
        v = min(r[i], c[j])
        out[i, j] = v
        r[i] -= v
        c[j] -= v
        if r[i] <= 1e-15 and i < r.size - 1:
            i += 1
        elif c[j] <= 1e-15:
            j += 1
        else:
            i += 1
    return out


def transport_lattice(anchor: np.ndarray, step: float) -> np.ndarray:
    """Points ``anchor + step * (integer zero-margin matrix)`` that are >= 0.

    When the anchor is an n-type and ``step = 1/n`` this is exactly the set
    of joint n-types sharing the anchor's marginals.
    """
    a = np.asarray(anchor, float)
    nx, ny = a.shape
    rows = a.sum(axis=1)
    cols = a.sum(axis=0)
    eps = 1e-12
    found: list[np.ndarray] = []
    table = np.zeros_like(a)

    def rec(k: int, row_used: np.ndarray, col_used: np.ndarray):
        if k == (nx - 1) * (ny - 1):
            last_col = rows[:-1] - row_used
            last_row = cols[:-1] - col_used
            corner = cols[-1] - last_col.sum()
            if corner < -eps or np.any(last_col < -eps) or np.any(last_row < -eps):
                return
            t = table.copy()
            t[:-1, -1] = last_col
            t[-1, :-1] = last_row
            t[-1, -1] = corner
            found.append(np.maximum(t, 0.0))
            return
        i, j = divmod(k, ny - 1)
        hi = min(rows[i] - row_used[i], cols[j] - col_used[j])
        kmin = math.ceil((-a[i, j]) / step - eps)
        kmax = math.floor((hi - a[i, j]) / step + eps)
        for kk in range(kmin, kmax + 1):
            v = max(a[i, j] + kk * step, 0.0)
            table[i, j] = v
            row_used[i] += v
            col_used[j] += v
            rec(k + 1, row_used, col_used)
            row_used[i] -= v
            col_used[j] -= v
        table[i, j] = 0.0

    if nx == 1 or ny == 1:
        return a[None].copy()
    rec(0, np.zeros(nx - 1), np.zeros(ny - 1))
    return np.asarray(found)


def transport_lattice_2x2(anchors: np.ndarray, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``transport_lattice`` for a stack of 2x2 anchors.

    Returns (owner index, joints) with one row per lattice point.
    """
    a = np.asarray(anchors, float)
    eps = 1e-12
    lo = np.ceil(-np.minimum(a[:, 0, 0], a[:, 1, 1]) / step - eps).astype(int)
    hi = np.floor(np.minimum(a[:, 0, 1], a[:, 1, 0]) / step + eps).astype(int)
    width = int((hi - lo).max()) + 1 if a.shape[0] else 0
    ks = lo[:, None] + np.arange(width)[None, :]
    ok = ks <= hi[:, None]
    owner = np.broadcast_to(np.arange(a.shape[0])[:, None], ks.shape)[ok]
    delta = ks[ok] * step
    pts = a[owner].copy()
    pts[:, 0, 0] += delta
    pts[:, 1, 1] += delta
    pts[:, 0, 1] -= delta
    pts[:, 1, 0] -= delta
    return owner, np.maximum(pts, 0.0)


# --------------------------------------------------------------------------
# coordinates used by the polishing stage
# --------------------------------------------------------------------------


class ConditionalCoords:
    """V(.|x) rows on supported inputs, parametrised by their first |Y|-1 entries."""

    def __init__(self, q: np.ndarray, ny: int):
        self.q = np.asarray(q, float)
        self.support = np.flatnonzero(self.q > 0)
        self.ny = ny
        self.dim = len(self.support) * (ny - 1)

    def to_joint(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, float)
        batch = z.reshape(-1, self.dim)
        k, s = batch.shape[0], len(self.support)
        head = batch.reshape(k * s, self.ny - 1)
        rows = np.concatenate([head, 1.0 - head.sum(axis=1, keepdims=True)], axis=1)
        rows = project_simplex(rows).reshape(k, s, self.ny)
        out = np.zeros((k, self.q.size, self.ny))
        out[:, self.support] = self.q[self.support, None] * rows
        return out[0] if z.ndim == 1 else out

    def from_joint(self, p: np.ndarray) -> np.ndarray:
        rows = p[self.support] / self.q[self.support, None]
        return rows[:, :-1].ravel()


class TransportCoords:
    """Zero-margin perturbations of the independent coupling of (px, py)."""

    def __init__(self, px: np.ndarray, py: np.ndarray, pivot: tuple[int, int] | None = None):
        self.px = np.asarray(px, float)
        self.py = np.asarray(py, float)
        nx, ny = self.px.size, self.py.size
        if pivot is None:
            pivot = (int(np.argmax(self.px)), int(np.argmax(self.py)))
        self.pivot = pivot
        px_, py_ = pivot
        self.free = [(i, j) for i in range(nx) for j in range(ny) if i != px_ and j != py_]
        basis = np.zeros((len(self.free), nx, ny))
        for k, (i, j) in enumerate(self.free):
            basis[k, i, j] += 1
            basis[k, i, py_] -= 1
            basis[k, px_, j] -= 1
            basis[k, px_, py_] += 1
        self.basis = basis
        self.dim = len(self.free)

    def center(self, py: np.ndarray | None = None) -> np.ndarray:
        return np.outer(self.px, self.py if py is None else py)

    def to_joint(self, t: np.ndarray, py: np.ndarray | None = None) -> np.ndarray:
        """Joint for coordinates ``t`` (batched over leading axes of t and py)."""
        py = self.py if py is None else np.asarray(py, float)
        c = self.px[:, None] * py[..., None, :]
        t = np.asarray(t, float)
        if self.dim == 0:
            return np.broadcast_to(c, t.shape[:-1] + c.shape[-2:]).copy()
        d = np.tensordot(t, self.basis, axes=1)
        c = np.broadcast_to(c, d.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d < 0, c / -d, np.inf)
        alpha = np.minimum(1.0, ratio.min(axis=(-2, -1)))
        return np.maximum(c + alpha[..., None, None] * d, 0.0)

    def from_joint(self, p: np.ndarray, py: np.ndarray | None = None) -> np.ndarray:
        c = self.center(py)
        return np.array([p[i, j] - c[i, j] for i, j in self.free])


def local_search(f: Callable[[np.ndarray], np.ndarray], z0: np.ndarray, step: float,
                 tol: float, seed: int = 0, max_iter: int = 400) -> tuple[np.ndarray, float]:
    """Batched derivative-free descent from ``z0``.

    Each round evaluates ``f`` on the coordinate moves and an equal number of
    random directions at radius ``step``; the best improving point is kept,
    otherwise the radius shrinks. Works on the kinks of hinge objectives
    where gradient steps stall.
    """
    rng = np.random.default_rng(seed)
    z = np.asarray(z0, float)
    best = float(f(z[None])[0])
    if z.size == 0 or not math.isfinite(best):
        return z, best
    eye = np.eye(z.size)
    stale = 0
    for _ in range(max_iter):
        rand = rng.normal(size=(2 * z.size + 2, z.size))
        rand /= np.linalg.norm(rand, axis=1, keepdims=True)
        dirs = np.vstack([eye, -eye, rand])
        cand = z + step * dirs
        vals = np.asarray(f(cand), float)
        vals = np.where(np.isnan(vals), np.inf, vals)
        i = int(np.argmin(vals))
        if vals[i] < best - 0.1 * tol:
            z, best = cand[i], float(vals[i])
            step *= 1.5
            stale = 0
        else:
            step *= 0.5
            stale += 1
        if step < 1e-9 or stale > 30:
            break
    return z, best


def _finite_or_inf(vals: np.ndarray) -> np.ndarray:
    vals = np.asarray(vals, float)
    if np.isnan(vals).any():
        vals = np.where(np.isnan(vals), np.inf, vals)
    return vals


def _top_distinct(vals: np.ndarray, k: int) -> list[int]:
    order = np.argsort(vals, kind="stable")
    picked: list[int] = []
    seen: set[float] = set()
    for idx in order:
        if not np.isfinite(vals[idx]) or len(picked) >= k:
            break
        key = round(float(vals[idx]), 12)
        if key in seen:
            continue
        seen.add(key)
        picked.append(int(idx))
    return picked or [int(order[0])]


# --------------------------------------------------------------------------
# public entry point
# --------------------------------------------------------------------------


def minimize_over_joint(objective: Callable[[np.ndarray], np.ndarray], x_marginal: Dist,
                        y_marginal: Dist | None = None, cfg: SolverConfig = SolverConfig(),
                        *, ny: int | None = None) -> tuple[JointDist, float]:
    """Minimise ``objective`` over joints with P_X = x_marginal (and P_Y = y_marginal).

    ``objective`` maps a stack of joints of shape (k, |X|, |Y|) to k values;
    +inf is allowed, NaN is an error. Without ``y_marginal`` the output
    alphabet size must be given as ``ny``.
    """
    if y_marginal is None:
        if ny is None:
            raise TypeError("give y_marginal or the output alphabet size ny")
        return _minimize(objective, x_marginal.probs, None, cfg, ny=ny)
    return _minimize(objective, x_marginal.probs, y_marginal.probs, cfg)


def _minimize(objective, qx: np.ndarray, py: np.ndarray | None, cfg: SolverConfig,
              ny: int | None = None) -> tuple[JointDist, float]:
    n = cfg.grid_denominator
    if py is None:
        grid = conditional_lattice(qx, ny, n)
        coords = ConditionalCoords(qx, ny)
        to_joint = coords.to_joint
        from_joint = coords.from_joint
    else:
        if abs(qx.sum() - py.sum()) > 1e-9:
            raise InfeasibleError("marginals have different total mass")
        grid = transport_lattice(northwest_corner(qx, py), 1.0 / n)
        coords = TransportCoords(qx, py)
        to_joint = coords.to_joint
        from_joint = coords.from_joint
    vals = np.asarray(objective(grid), float)
    if np.isnan(vals).any():
        raise SolverError("objective returned NaN on the lattice")
    best_i = int(np.argmin(vals))
    best_p, best_v = grid[best_i], float(vals[best_i])
    if not cfg.refine or coords.dim == 0 or not np.isfinite(best_v):
        return JointDist(_renorm(best_p)), best_v

    def f(z):
        v = np.asarray(objective(to_joint(z)), float)
        if np.isnan(v).any():
            raise SolverError("objective returned NaN")
        return v

    for idx in _top_distinct(vals, max(1, cfg.restarts)):
        z, v = local_search(f, from_joint(grid[idx]), 1.0 / n, cfg.tolerance)
        if v < best_v:
            best_v, best_p = v, to_joint(z)
    return JointDist(_renorm(best_p)), best_v


def _renorm(p: np.ndarray) -> np.ndarray:
    p = np.maximum(np.asarray(p, float), 0.0)
    return p / p.sum()
