"""Numerical checks of the lemmas, bounds and solver identities.

Each suite returns a list of ``Check`` rows. Every check carries its own
tolerance; passing ``tolerance`` overrides all of them at once (a value of
0 turns every approximate comparison into an exact one).
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from . import asymptotics as asy
from .exponents import classical
from .exponents.list_exponents import ExponentQuery, FixedL, randomized_list_exponent_fixed
from .metrics import MetricSpec
from .probability import Dist, Dmc, binary_divergence


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    detail: str


def _tol(default: float, override: float | None) -> float:
    return default if override is None else override


def suite_xi_star(tol: float | None = None) -> list[Check]:
    out = []
    t = _tol(1e-12, tol)
    golden = (math.sqrt(5) - 1) / 2
    out.append(Check("xi-star", "L=1 gives 1/2", abs(asy.xi_star(1) - 0.5) <= t, f"{asy.xi_star(1)!r}"))
    out.append(Check("xi-star", "L=2 gives golden ratio", abs(asy.xi_star(2) - golden) <= t,
                     f"{asy.xi_star(2)!r}"))
    prev = 0.0
    for L in (3, 10, 1e3, 1e6):
        x = asy.xi_star(L)
        upper = x <= L / (L + 1) + _tol(0.0, tol)
        lower = x >= 1 - math.log(L) / L - _tol(0.0, tol) if L >= math.e else True
        out.append(Check("xi-star", f"bounds L={L:g}", upper and lower,
                         f"{1 - math.log(L) / L:.6g} <= {x:.6g} <= {L / (L + 1):.6g}"))
        out.append(Check("xi-star", f"increasing at L={L:g}", x > prev, f"{prev:.6g} < {x:.6g}"))
        prev = x
    return out


def suite_lambert(tol: float | None = None) -> list[Check]:
    t = _tol(1e-14, tol)
    out = [Check("lambert", "W(0)=0", abs(asy.lambert_w0(0.0)) <= t, ""),
           Check("lambert", "W(e)=1", abs(asy.lambert_w0(math.e) - 1) <= t,
                 f"{asy.lambert_w0(math.e)!r}")]
    xs = np.geomspace(math.e, 1e8, 400)
    bad = [x for x in xs if asy.lambert_w0(x) > math.log(x) + _tol(0.0, tol)]
    out.append(Check("lambert", "W(L) <= ln L for L >= e", not bad, f"{len(bad)} violations"))
    res = max(abs(asy.lambert_w0(x) * math.exp(asy.lambert_w0(x)) - x) / x for x in xs)
    out.append(Check("lambert", "w e^w = x", res <= _tol(1e-13, tol), f"max rel residual {res:.2e}"))
    return out


def suite_xl_lemma(tol: float | None = None, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    t = _tol(1e-12, tol)
    bad = 0
    worst = -math.inf
    for _ in range(1000):
        k = int(rng.integers(1, 12))
        atoms = rng.random(k)
        atoms[rng.random(k) < 0.1] = 1.0
        w = rng.dirichlet(np.ones(k))
        for L in (1, 2, 4, 16):
            lhs, rhs = asy.verify_xl_lemma(atoms, w, L)
            worst = max(worst, lhs - rhs)
            bad += lhs > rhs + t
    return [Check("xl-lemma", "E[X^L] <= min_xi bound, 1000 laws x L in {1,2,4,16}", bad == 0,
                  f"{bad} violations, max lhs-rhs {worst:.3g}")]


def suite_chernoff(tol: float | None = None) -> list[Check]:
    """Binomial tail against the Chernoff bound and the one-half lower bound."""
    t = _tol(1e-12, tol)
    ms = (10, 20, 50, 100, 200, 500, 1000)
    ps = np.linspace(0.01, 0.99, 99)
    upper_bad = lower_bad = floor_bad = total_up = total_lo = 0
    example = ""
    for m in ms:
        for p in ps:
            for r in np.linspace(p, 1.0, 20):
                total_up += 1
                tail = asy.binomial_tail_prob(m, p, r * m)
                if tail > math.exp(-m * binary_divergence(r, p)) * (1 + t):
                    upper_bad += 1
            for r in np.linspace(0.0, p, 20):
                total_lo += 1
                tail = asy.binomial_tail_prob(m, p, r * m)
                if tail < 0.5 - t:
                    lower_bad += 1
                    if not example:
                        example = f"m={m}, p={p:.2f}, r={r:.3f}: P={tail:.4f}"
                # the binomial median is at least floor(mp)
                if r * m <= math.floor(m * p + 1e-9) and tail < 0.5 - t:
                    floor_bad += 1
    return [
        Check("chernoff", "P(X >= rm) <= exp(-m d(r||p)) for p <= r <= 1", upper_bad == 0,
              f"{upper_bad}/{total_up} violations"),
        Check("chernoff", "P(X >= rm) >= 1/2 for r <= p", lower_bad == 0,
              f"{lower_bad}/{total_lo} violations" + (f"; e.g. {example}" if example else "")),
        Check("chernoff", "P(X >= rm) >= 1/2 for rm <= floor(mp)", floor_bad == 0,
              f"{floor_bad} violations on the same grid"),
    ]


def suite_divergence(tol: float | None = None) -> list[Check]:
    grid = np.linspace(0.001, 0.999, 500)
    r, p = np.meshgrid(grid, grid)
    d = np.vectorize(binary_divergence)(r, p)
    gap = d - r * (np.log(r / p) - 1)
    bad = int(np.count_nonzero(gap <= _tol(0.0, tol)))
    return [Check("divergence", "d(r||p) > r(ln(r/p) - 1) on a 500x500 grid", bad == 0,
                  f"{bad} violations, min gap {gap.min():.3g}")]


def suite_l1_identity(tol: float | None = None, seed: int = 1) -> list[Check]:
    rng = np.random.default_rng(seed)
    t = _tol(1e-12, tol)
    worst = 0.0
    for _ in range(10_000):
        a, b = rng.random(2) * 2
        c = rng.normal()
        lhs = asy.integral_exponent_closed_form(asy.IntegralParams(a, b, c, 1))
        rhs = max(b - a + max(c, 0.0), 0.0)
        worst = max(worst, abs(lhs - rhs))
    return [Check("l1-identity", "[B-A]_+ + [C-[A-B]_+]_+ = [B-A+[C]_+]_+", worst <= t, f"max diff {worst:.2e}")]


INTEGRAL_TUPLES = (
    (0.10, 0.30, 0.20, 1), (0.10, 0.30, 0.20, 3), (0.15, 0.05, 0.20, 2), (0.15, 0.05, 0.05, 1),
    (0.05, 0.05, 0.10, 2), (0.00, 0.20, 0.30, 1), (0.10, 0.00, 0.30, 4), (0.12, 0.40, -0.10, 2),
    (0.15, 0.10, 0.50, 1), (0.08, 0.02, 0.02, 3),
)


def suite_integral(tol: float | None = None) -> list[Check]:
    t = _tol(0.05, tol)
    out = []
    for a, b, c, L in INTEGRAL_TUPLES:
        cf = asy.integral_exponent_closed_form(asy.IntegralParams(a, b, c, L))
        g50 = abs(asy.integral_exponent_numeric(asy.IntegralParams(a, b, c, L, 50)) - cf)
        g200 = abs(asy.integral_exponent_numeric(asy.IntegralParams(a, b, c, L, 200)) - cf)
        out.append(Check("integral", f"A={a} B={b} C={c} L={L}", g200 <= t and g200 < g50,
                         f"closed {cf:.4f}; gap n=50 {g50:.4f}, n=200 {g200:.4f}"))
    return out


def suite_oracle(tol: float | None = None) -> list[Check]:
    """Classical exponents against closed forms, and E_1 = E_r for matched and MMI."""
    t = _tol(1e-3, tol)
    w, q = Dmc.bsc(0.1), Dist.uniform(2)
    out = []
    er0 = classical.random_coding_exponent(w, q, 0.0)
    closed = math.log(2) - 2 * math.log(math.sqrt(0.9) + math.sqrt(0.1))
    out.append(Check("oracle", "E_r(0) on BSC(0.1)", abs(er0 - closed) <= _tol(1e-9, tol),
                     f"{er0:.10f} vs {closed:.10f}"))
    esp0 = classical.sphere_packing_exponent(w, q, 0.0)
    closed = -math.log(2 * math.sqrt(0.09))
    out.append(Check("oracle", "E_sp(0) on BSC(0.1)", abs(esp0 - closed) <= _tol(1e-9, tol),
                     f"{esp0:.10f} vs {closed:.10f}"))
    worst = 0.0
    for metric in (MetricSpec.matched(w), MetricSpec.mmi()):
        for bits in (0.05, 0.2, 0.35):
            R = bits * math.log(2)
            e1 = randomized_list_exponent_fixed(ExponentQuery(w, q, R, metric, FixedL(4)))
            worst = max(worst, abs(e1 - classical.random_coding_exponent(w, q, R)))
    out.append(Check("oracle", "E_1 = E_r for matched and MMI, L=4", worst <= t, f"max diff {worst:.2e}"))
    return out


SUITES: dict[str, Callable[..., list[Check]]] = {
    "xi-star": suite_xi_star,
    "lambert": suite_lambert,
    "xl-lemma": suite_xl_lemma,
    "chernoff": suite_chernoff,
    "divergence": suite_divergence,
    "l1-identity": suite_l1_identity,
    "integral": suite_integral,
    "oracle": suite_oracle,
}


def run_suites(only: list[str] | None = None, tolerance: float | None = None) -> list[Check]:
    names = list(SUITES) if not only else only
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    rows: list[Check] = []
    for name in names:
        rows.extend(SUITES[name](tolerance))
    return rows
