"""Exponent curves: pointwise sweeps over a rate grid and unit conversion."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import list_exponents as le
from .list_exponents import ExpLambda, ExponentQuery, FixedL


class ExponentKind(str, Enum):
    RANDOM_CODING = "random-coding"
    SPHERE_PACKING = "sphere-packing"
    RANDOMIZED = "randomized"
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class ExponentCurve:
    rates: np.ndarray
    values: np.ndarray
    label: str
    log_base: float = math.e
    flags: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        r = np.asarray(self.rates, float)
        v = np.asarray(self.values, float)
        if r.ndim != 1 or r.shape != v.shape:
            raise ValueError("rates and values must be 1-D of equal length")
        if r.size > 1 and np.any(np.diff(r) <= 0):
            raise ValueError("rates must be strictly increasing")
        if not self.log_base > 1:
            raise ValueError("log base must exceed 1")
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "values", v)

    def in_base(self, base: float) -> "ExponentCurve":
        """Same curve with rates and values expressed in log base ``base``."""
        f = math.log(self.log_base) / math.log(base)
        return ExponentCurve(self.rates * f, self.values * f, self.label, base, self.flags)

    def rows(self) -> list[tuple[float, float, str, str]]:
        base = "e" if math.isclose(self.log_base, math.e) else f"{self.log_base:g}"
        return [(float(r), float(v), self.label, base) for r, v in zip(self.rates, self.values)]


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("EXPLAB_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(query: ExponentQuery, kind: ExponentKind) -> float:
    kind = ExponentKind(kind)
    ch, q, R = query.channel, query.q, query.rate
    if kind is ExponentKind.RANDOM_CODING:
        return le.random_coding_exponent(ch, q, R)
    if kind is ExponentKind.SPHERE_PACKING:
        return le.sphere_packing_exponent(ch, q, R)
    if kind is ExponentKind.RANDOMIZED:
        if isinstance(query.list, FixedL):
            return le.randomized_list_exponent_fixed(query)
        return le.randomized_list_exponent_exp(query)
    if isinstance(query.list, FixedL):
        return le.deterministic_list_exponent_fixed(ch, q, R, query.list.L)
    return le.deterministic_list_exponent_exp(ch, q, R, query.list.lam)


def sweep(query: ExponentQuery, rates, kind: ExponentKind = ExponentKind.RANDOMIZED,
          label: str | None = None) -> ExponentCurve:
    """Evaluate ``kind`` at every rate (nats) of an increasing grid; result in nats.

    Points are independent and run on up to EXPLAB_THREADS workers. Points
    of the shifted sphere-packing curve with R < lambda are flagged.
    """
    rates = np.asarray(rates, float)
    if rates.ndim != 1 or rates.size == 0:
        raise ValueError("rate grid must be a non-empty vector")
    if rates.size > 1 and np.any(np.diff(rates) <= 0):
        raise ValueError("rate grid must be strictly increasing")
    kind = ExponentKind(kind)
    queries = [query.with_rate(float(r)) for r in rates]
    workers = min(_threads(), len(queries))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            values = list(pool.map(lambda qq: evaluate(qq, kind), queries))
    else:
        values = [evaluate(qq, kind) for qq in queries]
    flags: tuple[str, ...] = ()
    if kind is ExponentKind.DETERMINISTIC and isinstance(query.list, ExpLambda):
        clamped = [f"clamped:{r:.12g}" for r in rates if r < query.list.lam]
        flags = tuple(clamped)
    return ExponentCurve(rates, np.asarray(values, float), label or kind.value, math.e, flags)
