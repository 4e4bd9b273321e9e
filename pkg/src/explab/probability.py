"""Distributions, channels, information measures and type enumeration.

Everything is in nats. Extended reals are plain floats: ``math.inf`` is a
legitimate value of a divergence and propagates through ``+`` and ``min``
the usual way. The conventions ``0 ln 0 = 0`` and ``0 ln(0/q) = 0`` hold
everywhere, including in the batched array helpers that the solvers use.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SUM_TOL = 1e-12


class ShapeError(ValueError):
    """Operands live on different alphabets."""


class InfeasibleError(ValueError):
    """A constraint set is empty or a requested discretisation cannot exist."""


# --------------------------------------------------------------------------
# batched array helpers (used by the solvers on stacks of joints)
# --------------------------------------------------------------------------


def xlogx(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    out = np.zeros_like(a)
    pos = a > 0
    out[pos] = a[pos] * np.log(a[pos])
    return out


def xlogy_ratio(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Elementwise p ln(p/q) with 0 ln(0/.) = 0 and p ln(p/0) = +inf."""
    p, q = np.broadcast_arrays(np.asarray(p, float), np.asarray(q, float))
    out = np.zeros(p.shape)
    pos = p > 0
    bad = pos & (q <= 0)
    ok = pos & ~bad
    out[ok] = p[ok] * (np.log(p[ok]) - np.log(q[ok]))
    out[bad] = np.inf
    return out


def entropy_array(p: np.ndarray, axis=-1) -> np.ndarray:
    return -xlogx(p).sum(axis=axis)


def mutual_information_array(joint: np.ndarray) -> np.ndarray:
    """I(X;Y) for a stack of joints of shape (..., nx, ny)."""
    joint = np.asarray(joint, float)
    px = joint.sum(axis=-1)
    py = joint.sum(axis=-2)
    val = (entropy_array(px) + entropy_array(py)
           + xlogx(joint).sum(axis=(-2, -1)))
    return np.maximum(val, 0.0)


def kl_array(p: np.ndarray, q: np.ndarray, axes=(-2, -1)) -> np.ndarray:
    return xlogy_ratio(p, q).sum(axis=axes)


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Alphabet:
    size: int

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"alphabet size must be a positive integer, got {self.size!r}")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dist:
    """A probability vector on {0, ..., size-1}."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("Dist needs a non-empty 1-D probability vector")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError(f"negative or non-finite probability in {p}")
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(self.probs.size)

    @property
    def size(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, size: int) -> "Dist":
        return cls(np.full(size, 1.0 / size))

    def __eq__(self, other):
        return isinstance(other, Dist) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())


@dataclass(frozen=True, eq=False)
class JointDist:
    """A joint distribution on X x Y stored as an |X| x |Y| matrix."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 2 or p.size == 0:
            raise ValueError("JointDist needs a non-empty 2-D matrix")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError("negative or non-finite joint probability")
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"joint probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    @property
    def x_alphabet(self) -> Alphabet:
        return Alphabet(self.probs.shape[0])

    @property
    def y_alphabet(self) -> Alphabet:
        return Alphabet(self.probs.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    def x_marginal(self) -> Dist:
        return Dist(self.probs.sum(axis=1))

    def y_marginal(self) -> Dist:
        return Dist(self.probs.sum(axis=0))

    @classmethod
    def product(cls, px: Dist, py: Dist) -> "JointDist":
        return cls(np.outer(px.probs, py.probs))

    def __eq__(self, other):
        return isinstance(other, JointDist) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())


@dataclass(frozen=True, eq=False)
class Dmc:
    """Discrete memoryless channel; ``matrix[x, y] = W(y|x)``."""

    matrix: np.ndarray
    strictly_positive: bool = field(init=False)

    def __post_init__(self):
        w = _frozen(self.matrix)
        if w.ndim != 2 or w.size == 0:
            raise ValueError("channel matrix must be 2-D")
        for x, row in enumerate(w):
            try:
                Dist(row)
            except ValueError as exc:
                raise ValueError(f"row {x} of the channel is not a distribution: {exc}") from None
        object.__setattr__(self, "matrix", w)
        object.__setattr__(self, "strictly_positive", bool(np.all(w > 0)))

    @property
    def x_alphabet(self) -> Alphabet:
        return Alphabet(self.matrix.shape[0])

    @property
    def y_alphabet(self) -> Alphabet:
        return Alphabet(self.matrix.shape[1])

    @property
    def rows(self) -> tuple[Dist, ...]:
        return tuple(Dist(r) for r in self.matrix)

    def joint(self, q: Dist) -> JointDist:
        """The joint Q x W."""
        if q.size != self.matrix.shape[0]:
            raise ShapeError(f"input distribution has {q.size} symbols, channel has {self.matrix.shape[0]}")
        return JointDist(q.probs[:, None] * self.matrix)

    def output(self, q: Dist) -> Dist:
        return self.joint(q).y_marginal()

    @classmethod
    def bsc(cls, p: float) -> "Dmc":
        return cls([[1 - p, p], [p, 1 - p]])

    @classmethod
    def bec(cls, e: float) -> "Dmc":
        return cls([[1 - e, e, 0.0], [0.0, e, 1 - e]])

    def __eq__(self, other):
        return isinstance(other, Dmc) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())


@dataclass(frozen=True, eq=False)
class TypeDist:
    """An n-type: integer counts (vector or matrix) summing to ``n``."""

    n: int
    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts)
        if not np.issubdtype(c.dtype, np.integer):
            if np.any(c != np.round(c)):
                raise ValueError("type counts must be integers")
            c = c.astype(np.int64)
        if self.n < 1:
            raise ValueError("type denominator must be positive")
        if np.any(c < 0) or int(c.sum()) != self.n:
            raise ValueError(f"counts {c.tolist()} are not a type with denominator {self.n}")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.n

    def to_dist(self) -> Dist | JointDist:
        return Dist(self.probs) if self.counts.ndim == 1 else JointDist(self.probs)

    def __eq__(self, other):
        return (isinstance(other, TypeDist) and self.n == other.n
                and np.array_equal(self.counts, other.counts))

    def __hash__(self):
        return hash((self.n, self.counts.tobytes()))

    def __repr__(self):
        return f"TypeDist(n={self.n}, counts={self.counts.tolist()})"


# --------------------------------------------------------------------------
# information measures
# --------------------------------------------------------------------------


def _probs(p) -> np.ndarray:
    return p.probs if isinstance(p, (Dist, JointDist, TypeDist)) else np.asarray(p, float)


def entropy(p: Dist) -> float:
    return float(entropy_array(_probs(p).ravel()))


def kl(p, q) -> float:
    """D(p||q) in nats; +inf when p is not absolutely continuous w.r.t. q."""
    a, b = _probs(p), _probs(q)
    if a.shape != b.shape:
        raise ShapeError(f"cannot compare shapes {a.shape} and {b.shape}")
    return float(xlogy_ratio(a, b).sum())


def mutual_information(p: JointDist) -> float:
    return float(mutual_information_array(_probs(p)))


def binary_divergence(r: float, p: float) -> float:
    """d(r||p) between Bernoulli(r) and Bernoulli(p)."""
    if not (0.0 <= r <= 1.0 and 0.0 <= p <= 1.0):
        raise ValueError("binary divergence arguments must lie in [0, 1]")
    return kl([r, 1.0 - r], [p, 1.0 - p])


def kl_to_channel(p: JointDist, q: Dist, w: Dmc) -> float:
    """D(P_XY || Q x W)."""
    ref = w.joint(q).probs
    if _probs(p).shape != ref.shape:
        raise ShapeError(f"joint of shape {_probs(p).shape} vs channel {ref.shape}")
    return kl(p, ref)


# --------------------------------------------------------------------------
# types
# --------------------------------------------------------------------------


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All nonnegative integer vectors of length ``parts`` summing to ``total``,
    lexicographically decreasing."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_types(size: int, n: int) -> Iterator[TypeDist]:
    """All n-types on an alphabet of ``size`` symbols."""
    if n < 1:
        raise ValueError("n must be positive")
    for c in _compositions(n, size):
        yield TypeDist(n, np.array(c, dtype=np.int64))


def _as_counts(marg, n: int, size: int) -> np.ndarray:
    if isinstance(marg, TypeDist):
        if marg.n != n:
            raise ValueError(f"marginal type has denominator {marg.n}, expected {n}")
        c = marg.counts
    else:
        c = np.asarray(marg)
        if c.dtype.kind == "f":
            raise ValueError("marginal constraints must be integer counts or TypeDist")
        if int(c.sum()) != n:
            raise ValueError("marginal counts must sum to n")
    if c.shape != (size,):
        raise ShapeError(f"marginal of length {c.shape} for an alphabet of size {size}")
    return np.asarray(c, dtype=np.int64)


def enumerate_joint_types(x_size: int, y_size: int, n: int,
                          x_marginal=None, y_marginal=None) -> Iterator[TypeDist]:
    """Every joint n-type on X x Y with the optional fixed marginal counts.

    Tables come out in lexicographically decreasing order of their
    row-major flattening; each appears once. Infeasible margins yield
    nothing.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rows = None if x_marginal is None else _as_counts(x_marginal, n, x_size)
    cols = None if y_marginal is None else _as_counts(y_marginal, n, y_size)
    cells = x_size * y_size
    table = np.zeros((x_size, y_size), dtype=np.int64)

    def rec(k: int, left: int, row_left: np.ndarray, col_left: np.ndarray):
        if k == cells:
            if left == 0 and (rows is None or not row_left.any()) and (cols is None or not col_left.any()):
                yield TypeDist(n, table.copy())
            return
        i, j = divmod(k, y_size)
        hi = left
        if rows is not None:
            hi = min(hi, row_left[i])
        if cols is not None:
            hi = min(hi, col_left[j])
        lo = 0
        # last cell of a constrained row / column is forced
        if rows is not None and j == y_size - 1:
            lo = row_left[i]
        if cols is not None and i == x_size - 1:
            lo = max(lo, col_left[j])
        if k == cells - 1:
            lo = max(lo, left)
        for v in range(hi, lo - 1, -1):
            table[i, j] = v
            row_left[i] -= v
            col_left[j] -= v
            yield from rec(k + 1, left - v, row_left, col_left)
            row_left[i] += v
            col_left[j] += v
        table[i, j] = 0

    r0 = rows.copy() if rows is not None else np.zeros(x_size, dtype=np.int64)
    c0 = cols.copy() if cols is not None else np.zeros(y_size, dtype=np.int64)
    if rows is not None and cols is not None and rows.sum() != cols.sum():
        return
    yield from rec(0, n, r0, c0)


def quantize_to_type(q: Dist, n: int) -> TypeDist:
    """Nearest n-type with the support of ``q`` and max deviation <= 1/n.

    Largest-remainder rounding with lowest-index tie-break; if that loses a
    supported symbol, the counts are repaired inside the 1/n band.
    """
    p = _probs(q)
    support = p > 0
    if n < int(support.sum()):
        raise InfeasibleError(f"n={n} cannot carry a support of size {int(support.sum())}")
    target = n * p
    counts = np.floor(target).astype(np.int64)
    short = n - int(counts.sum())
    frac = target - counts
    # stable sort on -frac keeps the lowest index first among ties
    order = np.argsort(-frac, kind="stable")
    counts[order[:short]] += 1
    if np.all(counts[support] > 0):
        return TypeDist(n, counts)

    lo = np.where(support, np.maximum(1, np.ceil(target - 1 - 1e-12)), 0).astype(np.int64)
    hi = np.where(support, np.floor(target + 1 + 1e-12), 0).astype(np.int64)
    if lo.sum() > n or hi.sum() < n:
        raise InfeasibleError(f"no {n}-type keeps the support of {p.tolist()} within 1/n")
    counts = lo.copy()
    while counts.sum() < n:
        room = np.where(counts < hi, target - counts, -np.inf)
        counts[int(np.argmax(room))] += 1
    return TypeDist(n, counts)


def type_class_log_size(counts: Sequence[int]) -> float:
    """ln |T(P)| = ln n! - sum ln n_a!"""
    c = np.asarray(counts).ravel()
    return math.lgamma(int(c.sum()) + 1) - sum(math.lgamma(int(k) + 1) for k in c)


# --------------------------------------------------------------------------
# config parsing
# --------------------------------------------------------------------------


def parse_channel(spec) -> Dmc:
    """Channel from ``bsc:<p>``, ``bec:<e>``, a JSON string/file or a dict.

    The JSON form is ``{"x_size": k, "y_size": m, "rows": [[...], ...]}``.
    """
    if isinstance(spec, Dmc):
        return spec
    if isinstance(spec, dict):
        rows = np.asarray(spec["rows"], dtype=float)
        if "x_size" in spec and rows.shape[0] != spec["x_size"]:
            raise ShapeError("x_size does not match the number of rows")
        if "y_size" in spec and rows.shape[1] != spec["y_size"]:
            raise ShapeError("y_size does not match the row length")
        return Dmc(rows)
    s = str(spec).strip()
    low = s.lower()
    if low.startswith("bsc:"):
        return Dmc.bsc(float(s[4:]))
    if low.startswith("bec:"):
        return Dmc.bec(float(s[4:]))
    if s.startswith("{"):
        return parse_channel(json.loads(s))
    path = Path(s)
    if path.suffix == ".json" and path.exists():
        return parse_channel(json.loads(path.read_text()))
    raise ValueError(f"unrecognised channel spec {spec!r}")


def channel_to_json(w: Dmc) -> dict:
    x, y = w.matrix.shape
    return {"x_size": x, "y_size": y, "rows": w.matrix.tolist()}


def parse_dist(spec, size: int) -> Dist:
    """``uniform``, a comma list ``0.3,0.7`` or a JSON list."""
    if isinstance(spec, Dist):
        if spec.size != size:
            raise ShapeError(f"distribution on {spec.size} symbols, expected {size}")
        return spec
    if isinstance(spec, (list, tuple, np.ndarray)):
        d = Dist(np.asarray(spec, float))
    else:
        s = str(spec).strip()
        if s.lower() == "uniform":
            return Dist.uniform(size)
        if s.startswith("["):
            d = Dist(np.asarray(json.loads(s), float))
        else:
            d = Dist(np.asarray([float(t) for t in s.split(",")]))
    if d.size != size:
        raise ShapeError(f"distribution on {d.size} symbols, expected {size}")
    return d
