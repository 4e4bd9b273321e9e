"""``explab`` command line: exponent sweeps, simulation, validation, Fig.-1 curves."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .exponents import classical
from .exponents.curves import ExponentCurve, ExponentKind, sweep
from .exponents.list_exponents import ExpLambda, ExponentQuery, FixedL
from .exponents.solver import SolverConfig, SolverError
from .metrics import MetricSpec, parse_metric
from .probability import Dist, Dmc, parse_channel, parse_dist
from .simulator import SimConfig, estimate_error_probability, estimate_exponent
from .validation import SUITES, run_suites

log = logging.getLogger("explab")


# --------------------------------------------------------------------------
# manifest and output helpers
# --------------------------------------------------------------------------


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunManifest:
    argv: list[str]
    config: dict
    seed: int | None = None
    outputs: list[str] = field(default_factory=list)
    started: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def write(self, path: Path) -> None:
        doc = {
            "argv": self.argv,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "seed": self.seed,
            "version": __version__,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "outputs": self.outputs,
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def write_curves(path: Path, curves: list[ExponentCurve]) -> None:
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["rate", "value", "label", "log_base"])
        for c in curves:
            for r, v, label, base in c.rows():
                wr.writerow([_fmt(r), _fmt(v), label, base])


def read_curves(path: Path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """label -> (rates, values) from a CSV written by ``write_curves``."""
    out: dict[str, tuple[list, list]] = {}
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            r, v = out.setdefault(row["label"], ([], []))
            r.append(float(row["rate"]))
            v.append(float(row["value"]))
    return {k: (np.array(r), np.array(v)) for k, (r, v) in out.items()}


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _base(text: str) -> float:
    if text in ("e", "E"):
        return math.e
    if text == "2":
        return 2.0
    raise argparse.ArgumentTypeError("base must be 2 or e")


def _rate_grid(text: str) -> np.ndarray:
    """``start:stop:step`` (inclusive) or a comma list."""
    try:
        if ":" in text:
            a, b, s = (float(x) for x in text.split(":"))
            if s <= 0 or b < a:
                raise ValueError
            count = int(math.floor((b - a) / s + 1e-9)) + 1
            return a + s * np.arange(count)
        vals = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rate grid {text!r}") from None
    if np.any(np.diff(vals) <= 0):
        raise argparse.ArgumentTypeError("rate list must be strictly increasing")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _n_grid(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad n grid {text!r}") from None


def _solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid-denominator", type=int, default=64)
    p.add_argument("--restarts", type=int, default=2)
    p.add_argument("--no-refine", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="explab", description="Error exponents of randomised list decoding.")
    parser.add_argument("--version", action="version", version=f"explab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exponent", help="sweep exponent curves over a rate grid")
    p.add_argument("--channel", required=True)
    p.add_argument("--q", default="uniform")
    p.add_argument("--metric", action="append", help="matched | mmi | mismatched:<channel> | constant:<c>")
    p.add_argument("--fixed-l", type=_positive_int, action="append")
    p.add_argument("--lam", type=float, action="append", help="list-size exponent, in units of --base")
    p.add_argument("--decoder", choices=["randomized", "deterministic"], default="randomized")
    p.add_argument("--classical", choices=["random-coding", "sphere-packing"], action="append", default=[])
    p.add_argument("--rates", type=_rate_grid, required=True, help="start:stop:step, in units of --base")
    p.add_argument("--base", type=_base, default=math.e)
    p.add_argument("--out", type=Path, default=Path("exponent.csv"))
    _solver_args(p)

    p = sub.add_parser("simulate", help="Monte Carlo estimate of the list-error probability")
    p.add_argument("--config", type=Path, help="JSON file with any of the flags below")
    p.add_argument("--channel")
    p.add_argument("--q", default=None)
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--n-grid", type=_n_grid)
    p.add_argument("--rate", type=float, help="in units of --base")
    p.add_argument("--base", type=_base, default=None)
    p.add_argument("--metric", default=None)
    p.add_argument("--fixed-l", type=_positive_int)
    p.add_argument("--lam", type=float)
    p.add_argument("--decoder", choices=["randomized", "deterministic"], default=None)
    p.add_argument("--trials", type=_positive_int)
    p.add_argument("--batch", type=_positive_int, help="codebooks_per_trial_batch")
    p.add_argument("--seed", type=int)
    p.add_argument("--no-rao-blackwell", action="store_true", default=None)
    p.add_argument("--mode", choices=["auto", "explicit", "enumerator"])
    p.add_argument("--out", type=Path, default=Path("simulate.json"))

    p = sub.add_parser("reproduce-fig1", help="BSC(0.1) curves of the list-decoding figure")
    p.add_argument("--outdir", type=Path, default=Path("fig1"))
    p.add_argument("--lam", type=float, default=0.1, help="list-size exponent in bits")
    p.add_argument("--step", type=float, default=0.01, help="rate step in bits")
    _solver_args(p)

    p = sub.add_parser("validate", help="run the lemma, bound and oracle suites")
    p.add_argument("--only", action="append", choices=sorted(SUITES))
    p.add_argument("--tolerance", type=float, default=None)
    return parser


def _solver(args) -> SolverConfig:
    return SolverConfig(grid_denominator=args.grid_denominator, restarts=args.restarts, refine=not args.no_refine)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_exponent(args, parser) -> int:
    try:
        channel = parse_channel(args.channel)
        q = parse_dist(args.q, channel.matrix.shape[0])
        metrics = [parse_metric(m, channel) for m in (args.metric or ["matched"])]
        ExponentQuery(channel, q, 0.0, metrics[0])  # alphabet checks
    except (ValueError, KeyError, TypeError) as exc:
        parser.error(str(exc))
    to_nats = math.log(args.base)
    rates = args.rates * to_nats
    if np.any(rates < 0):
        parser.error("rates must be non-negative")
    lists: list[FixedL | ExpLambda] = [FixedL(L) for L in (args.fixed_l or [])]
    lists += [ExpLambda(lam * to_nats) for lam in (args.lam or [])]
    if not lists and not args.classical:
        lists = [FixedL(1)]
    cfg = _solver(args)
    curves = []
    for kind in args.classical:
        query = ExponentQuery(channel, q, 0.0, metrics[0], FixedL(1), cfg)
        label = "E_r" if kind == "random-coding" else "E_sp"
        curves.append(sweep(query, rates, ExponentKind(kind), label))
    kind = ExponentKind.RANDOMIZED if args.decoder == "randomized" else ExponentKind.DETERMINISTIC
    for metric in metrics if kind is ExponentKind.RANDOMIZED else metrics[:1]:
        for lst in lists:
            query = ExponentQuery(channel, q, 0.0, metric, lst, cfg)
            curves.append(sweep(query, rates, kind, _label(kind, metric, lst, args.base)))
    curves = [c.in_base(args.base) for c in curves]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_curves(args.out, curves)
    config = {"command": "exponent", "channel": channel.matrix.tolist(), "q": q.probs.tolist(),
              "metrics": [m.label() for m in metrics], "lists": [repr(x) for x in lists],
              "decoder": args.decoder, "classical": args.classical, "rates": args.rates.tolist(),
              "base": "e" if args.base == math.e else "2", "solver": asdict(cfg)}
    RunManifest(args.argv, config, None, [str(args.out)]).write(_manifest_path(args.out))
    for c in curves:
        for flag in c.flags:
            log.warning("%s: %s", c.label, flag)
    return 0


def _label(kind: ExponentKind, metric: MetricSpec, lst, base: float) -> str:
    prefix = "E1" if isinstance(lst, FixedL) else "E2"
    if kind is ExponentKind.DETERMINISTIC:
        prefix += "det"
    if isinstance(lst, FixedL):
        tail = f"L{lst.L}"
    else:
        tail = f"lam{lst.lam / math.log(base):g}"
    return f"{prefix}_{tail}" if kind is ExponentKind.DETERMINISTIC else f"{prefix}_{metric.label()}_{tail}"


_SIM_DEFAULTS = {"q": "uniform", "base": "e", "metric": "matched", "decoder": "randomized",
                 "trials": 10_000, "batch": 1, "seed": 0, "no_rao_blackwell": False, "mode": "auto"}


def cmd_simulate(args, parser) -> int:
    settings = dict(_SIM_DEFAULTS)
    if args.config is not None:
        try:
            settings.update({k.replace("-", "_"): v for k, v in json.loads(args.config.read_text()).items()})
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config: {exc}")
    for key in ("channel", "q", "n", "n_grid", "rate", "metric", "fixed_l", "lam", "decoder", "trials",
                "batch", "seed", "no_rao_blackwell", "mode"):
        val = getattr(args, key)
        if val is not None:
            settings[key] = val
    if args.base is not None:
        settings["base"] = "e" if args.base == math.e else "2"
    missing = [k for k in ("channel", "rate") if settings.get(k) is None]
    if settings.get("n") is None and settings.get("n_grid") is None:
        missing.append("n or n_grid")
    if missing:
        parser.error("missing: " + ", ".join(missing))
    to_nats = math.log(_base(str(settings["base"])))
    try:
        channel = parse_channel(settings["channel"])
        q = parse_dist(settings["q"], channel.matrix.shape[0])
        metric = parse_metric(settings["metric"], channel)
        if settings.get("lam") is not None:
            lst = ExpLambda(float(settings["lam"]) * to_nats)
        else:
            lst = FixedL(int(settings.get("fixed_l") or 1))
        grid = settings.get("n_grid")
        n0 = int(grid[0]) if grid else int(settings["n"])
        cfg = SimConfig(channel, q, n0, float(settings["rate"]) * to_nats, metric, lst,
                        decoder=settings["decoder"], trials=int(settings["trials"]),
                        codebooks_per_trial_batch=int(settings["batch"]), seed=int(settings["seed"]),
                        rao_blackwell=not settings["no_rao_blackwell"], mode=settings["mode"])
    except (ValueError, KeyError, TypeError) as exc:
        parser.error(str(exc))
    if grid:
        fit = estimate_exponent(cfg, grid)
        result = {"M": cfg.M, "list_size": cfg.list_size, **fit.to_dict()}
    else:
        result = {"M": cfg.M, "list_size": cfg.list_size, **estimate_error_probability(cfg).to_dict()}
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    settings["channel"] = channel.matrix.tolist()
    settings["q"] = q.probs.tolist()
    RunManifest(args.argv, settings, int(settings["seed"]), [str(args.out)]).write(_manifest_path(args.out))
    print(json.dumps(result, sort_keys=True))
    return 0


FIG1_LABELS = ("E_r", "E1_L4", "E1det_L4", "E2_lambda", "Esp_shift_lambda")

GNUPLOT = """\
set datafile separator ","
set key top right
set xlabel "R [bits]"
set ylabel "exponent [bits]"
set yrange [0:*]
plot \\
  "E_r.csv" every ::1 using 1:2 with lines lw 2 lc rgb "black" title "E_r", \\
  "E1_L4.csv" every ::1 using 1:2 with lines dt 2 lc rgb "blue" title "E_1 (L=4)", \\
  "E1det_L4.csv" every ::1 using 1:2 with lines lc rgb "blue" title "deterministic, L=4", \\
  "E2_lambda.csv" every ::1 using 1:2 with lines dt 2 lc rgb "dark-green" title "E_2", \\
  "Esp_shift_lambda.csv" every ::1 using 1:2 with lines lc rgb "dark-green" title "E_sp(R - lambda)"
"""


def reproduce_fig1(outdir: Path, lam_bits: float = 0.1, step_bits: float = 0.01,
                   cfg: SolverConfig = SolverConfig()) -> dict[str, ExponentCurve]:
    w, q = Dmc.bsc(0.1), Dist.uniform(2)
    ln2 = math.log(2)
    cap_bits = classical.capacity_term(w, q) / ln2
    count = int(math.floor(cap_bits / step_bits + 1e-9)) + 1
    rates = step_bits * np.arange(count) * ln2
    lam = lam_bits * ln2
    shifted = rates[rates >= lam - 1e-12]
    metric = MetricSpec.matched(w)
    fixed = ExponentQuery(w, q, 0.0, metric, FixedL(4), cfg)
    expl = ExponentQuery(w, q, 0.0, metric, ExpLambda(lam), cfg)
    curves = {
        "E_r": sweep(fixed, rates, ExponentKind.RANDOM_CODING, "E_r"),
        "E1_L4": sweep(fixed, rates, ExponentKind.RANDOMIZED, "E1_L4"),
        "E1det_L4": sweep(fixed, rates, ExponentKind.DETERMINISTIC, "E1det_L4"),
        "E2_lambda": sweep(expl, shifted, ExponentKind.RANDOMIZED, "E2_lambda"),
        "Esp_shift_lambda": sweep(expl, shifted, ExponentKind.DETERMINISTIC, "Esp_shift_lambda"),
    }
    curves = {k: c.in_base(2.0) for k, c in curves.items()}
    outdir.mkdir(parents=True, exist_ok=True)
    for label, c in curves.items():
        write_curves(outdir / f"{label}.csv", [c])
    (outdir / "fig1.gp").write_text(GNUPLOT)
    return curves


def cmd_reproduce_fig1(args, parser) -> int:
    if args.lam < 0 or args.step <= 0:
        parser.error("need --lam >= 0 and --step > 0")
    reproduce_fig1(args.outdir, args.lam, args.step, _solver(args))
    outputs = [str(args.outdir / f"{k}.csv") for k in FIG1_LABELS] + [str(args.outdir / "fig1.gp")]
    config = {"command": "reproduce-fig1", "lam_bits": args.lam, "step_bits": args.step,
              "grid_denominator": args.grid_denominator, "restarts": args.restarts, "refine": not args.no_refine}
    RunManifest(args.argv, config, None, outputs).write(args.outdir / "manifest.json")
    return 0


def cmd_validate(args, parser) -> int:
    rows = run_suites(args.only, args.tolerance)
    width = max(len(r.suite) for r in rows)
    for r in rows:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.suite:<{width}}  {r.name}  [{r.detail}]")
    failed = [r for r in rows if not r.passed]
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed")
    return 1 if failed else 0


COMMANDS = {"exponent": cmd_exponent, "simulate": cmd_simulate,
            "reproduce-fig1": cmd_reproduce_fig1, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, parser)
    except (SolverError, ArithmeticError, OverflowError, MemoryError) as exc:
        print(f"explab: solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
