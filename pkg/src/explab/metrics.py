"""Decoding metrics g on joint distributions, u_n(x, y) = exp(n g(joint type)).

Four kinds are supported: the matched metric (log-likelihood of the true
channel), a mismatched one (log-likelihood of some other channel V), the
MMI metric (empirical mutual information) and a constant. ``eval_metric``
works on a single joint or on a stack of shape (..., |X|, |Y|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .probability import (Dmc, JointDist, ShapeError, mutual_information_array,
                          parse_channel)


class MetricKind(str, Enum):
    MATCHED = "matched"
    MISMATCHED = "mismatched"
    MMI = "mmi"
    CONSTANT = "constant"


class IndeterminateError(ArithmeticError):
    """An inf - inf came up while differencing metric values."""


@dataclass(frozen=True)
class MetricSpec:
    kind: MetricKind
    channel: Dmc | None = None
    value: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", MetricKind(self.kind))
        if self.kind in (MetricKind.MATCHED, MetricKind.MISMATCHED) and self.channel is None:
            raise ValueError(f"{self.kind.value} metric needs a channel")
        if self.kind is MetricKind.CONSTANT and not math.isfinite(self.value):
            raise ValueError("constant metric must be finite")

    @classmethod
    def matched(cls, w: Dmc) -> "MetricSpec":
        return cls(MetricKind.MATCHED, channel=w)

    @classmethod
    def mismatched(cls, v: Dmc) -> "MetricSpec":
        return cls(MetricKind.MISMATCHED, channel=v)

    @classmethod
    def mmi(cls) -> "MetricSpec":
        return cls(MetricKind.MMI)

    @classmethod
    def constant(cls, c: float = 0.0) -> "MetricSpec":
        return cls(MetricKind.CONSTANT, value=float(c))

    @property
    def is_linear(self) -> bool:
        """True when g is linear in the joint (everything but MMI)."""
        return self.kind is not MetricKind.MMI

    def label(self) -> str:
        if self.kind is MetricKind.CONSTANT:
            return f"constant:{self.value:g}"
        return self.kind.value

    def log_weights(self) -> np.ndarray | None:
        """ln V(y|x) for the likelihood-type metrics, -inf on zeros."""
        if self.channel is None:
            return None
        with np.errstate(divide="ignore"):
            return np.log(self.channel.matrix)


def parse_metric(spec: str, channel: Dmc | None = None) -> MetricSpec:
    """``matched``, ``mmi``, ``mismatched:<channel-spec>`` or ``constant:<c>``."""
    if isinstance(spec, MetricSpec):
        return spec
    s = str(spec).strip()
    head, _, rest = s.partition(":")
    head = head.lower()
    if head == "matched":
        if channel is None:
            raise ValueError("the matched metric needs the true channel")
        return MetricSpec.matched(channel)
    if head == "mmi":
        return MetricSpec.mmi()
    if head == "mismatched":
        return MetricSpec.mismatched(parse_channel(rest))
    if head == "constant":
        return MetricSpec.constant(float(rest) if rest else 0.0)
    raise ValueError(f"unrecognised metric {spec!r}")


def eval_metric(g: MetricSpec, p) -> float | np.ndarray:
    """g(P) in nats per symbol; -inf for a likelihood metric with mass on a zero."""
    arr = p.probs if isinstance(p, JointDist) else np.asarray(p, dtype=float)
    scalar = arr.ndim == 2
    if g.kind is MetricKind.CONSTANT:
        out = np.full(arr.shape[:-2], g.value)
    elif g.kind is MetricKind.MMI:
        out = mutual_information_array(arr)
    else:
        lw = g.log_weights()
        if arr.shape[-2:] != lw.shape:
            raise ShapeError(f"metric channel is {lw.shape}, joint is {arr.shape[-2:]}")
        terms = np.where(arr > 0, arr * np.where(np.isfinite(lw), lw, 0.0), 0.0)
        out = terms.sum(axis=(-2, -1))
        hits_zero = ((arr > 0) & ~np.isfinite(lw)).any(axis=(-2, -1))
        out = np.where(hits_zero, -np.inf, out)
    return float(out) if scalar else out


def metric_gap(g: MetricSpec, p, p_tilde) -> float:
    """g(P) - g(P~); raises on the indeterminate -inf - (-inf)."""
    a = eval_metric(g, p)
    b = eval_metric(g, p_tilde)
    if math.isinf(a) and math.isinf(b):
        raise IndeterminateError("both joints put mass on zeros of the metric channel")
    return a - b


def metric_gap_array(g: MetricSpec, p: np.ndarray, p_tilde: np.ndarray) -> np.ndarray:
    """Batched g(P) - g(P~); indeterminate entries come back as NaN."""
    with np.errstate(invalid="ignore"):
        return np.asarray(eval_metric(g, p)) - np.asarray(eval_metric(g, p_tilde))
