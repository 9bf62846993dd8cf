"""Command-line entry point: ``extrapsens analyze`` and ``extrapsens simulate``.

Options may also come from an INI file given with ``--config``; keys in the
``[analyze]`` or ``[simulate]`` section use the long flag names (``q-max``,
``outcome-kind``...). Flags on the command line win.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import platform
import sys
from pathlib import Path

import matplotlib
import numpy as np
import scipy

from . import __version__
from .data import ColumnSpec, load_csv, write_table
from .errors import DataError, NumericError
from .extrapolation import (
    default_q_values,
    extrapolate_ensemble,
    max_knots,
    select_knots_cv,
)
from .perturbation import build_ensemble
from .plotting import plot_report, plot_trajectory
from .simulation import Scenario, run_study, scenario_dict

log = logging.getLogger("extrapsens")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _knots(value: str):
    if value in ("cv", "max"):
        return value
    try:
        k = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("knots must be 'cv', 'max' or an integer") from None
    if k < 0:
        raise argparse.ArgumentTypeError("knot count must be non-negative")
    return k


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="extrapsens", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="sensitivity analysis of one dataset")
    a.add_argument("--config", help="INI file with an [analyze] section")
    a.add_argument("--data", help="input CSV")
    a.add_argument("--exposure", help="binary exposure column")
    a.add_argument("--outcome", help="outcome column")
    a.add_argument("--outcome-kind", choices=("binary", "continuous"), default=None)
    a.add_argument("--covariates", default="all-others",
                   help="comma-separated covariate columns, or 'all-others'")
    a.add_argument("--b", type=int, default=500, help="number of perturbed trajectories")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--q-max", type=int, default=None,
                   help="largest extrapolation horizon (default: ceil(J/2))")
    a.add_argument("--trim", type=float, default=0.05)
    a.add_argument("--knots", type=_knots, default="max", help="cv, max or an interior knot count")
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("--out", help="output directory")
    a.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("simulate", help="run a simulation study scenario")
    s.add_argument("--config", help="INI file with a [simulate] section")
    s.add_argument("--study", type=int, default=1)
    s.add_argument("--p", type=int, default=12)
    s.add_argument("--q", type=int, default=0)
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--link", choices=("logit", "probit"), default="logit")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--population", type=int, default=50_000)
    s.add_argument("--replicates", type=int, default=1000)
    s.add_argument("--b", type=int, default=100)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--trim", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", help="output directory")
    s.add_argument("--workers", type=int, default=1)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    cp = configparser.ConfigParser()
    try:
        with open(args.config, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    if not cp.has_section(args.command):
        raise UsageError(f"config has no [{args.command}] section")
    # re-parse with config values inserted ahead of the real flags, so flags win
    injected = []
    for key, value in cp.items(args.command):
        injected += [f"--{key.replace('_', '-')}", value]
    return parser.parse_args([args.command] + injected + argv[1:])


def _validate_common(args):
    if args.seed is None:
        raise UsageError("--seed is required")
    if args.seed < 0:
        raise UsageError("--seed must be non-negative")
    if not 0 < args.alpha < 1:
        raise UsageError("--alpha must lie in (0, 1)")
    if args.b < 1:
        raise UsageError("--b must be at least 1")
    if not 0 <= args.trim < 0.5:
        raise UsageError("--trim must lie in [0, 0.5)")
    if not args.out:
        raise UsageError("--out is required")


def _versions():
    return {"extrapsens": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__, "python": platform.python_version()}


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_header(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return [h.strip() for h in next(csv.reader(fh), [])]
    except OSError as exc:
        raise DataError(str(exc)) from exc


def orbit_rows(traj) -> list[dict]:
    rows = []
    for j, o in enumerate(traj.orbits):
        rows.append({
            "orbit": j,
            "added_covariate": traj.added_at(j) or "",
            "estimate": o.estimate,
            "variance": o.variance,
            "se": o.se,
            "ci_lower": o.ci_lower,
            "ci_upper": o.ci_upper,
        })
    return rows


def extrapolation_rows(result) -> list[dict]:
    rows = []
    for c, q in enumerate(result.q_values):
        rows.append({
            "q": q,
            "covariates": result.J + q,
            "predicted_effect": result.predicted_effects[0, c],
            "predicted_ci_lower": result.predicted_lower[0, c],
            "predicted_ci_upper": result.predicted_upper[0, c],
            "effect_percentile_lower": result.effect_lower[c],
            "effect_percentile_upper": result.effect_upper[c],
            "share_negative": float(np.mean(result.predicted_effects[:, c] < 0)),
            "ui_lower": result.uncertainty_lower[c],
            "ui_upper": result.uncertainty_upper[c],
            "ui_excludes_zero": bool(result.excludes_zero()[c]),
            "crossing_q": "" if result.crossing_q is None else result.crossing_q,
        })
    return rows


def run_analyze(args) -> int:
    _validate_common(args)
    for flag in ("data", "exposure", "outcome"):
        if not getattr(args, flag):
            raise UsageError(f"--{flag} is required")
    if args.q_max is not None and args.q_max < 1:
        raise UsageError("--q-max must be at least 1")

    header = _read_header(args.data)
    if args.covariates == "all-others":
        covs = [h for h in header if h not in (args.exposure, args.outcome)]
    else:
        covs = [c.strip() for c in args.covariates.split(",") if c.strip()]
    specs = [ColumnSpec(args.exposure, "exposure"),
             ColumnSpec(args.outcome, "outcome", args.outcome_kind)]
    specs += [ColumnSpec(c, "covariate") for c in covs]
    data = load_csv(args.data, specs, drop_incomplete=True)
    log.info("loaded n=%d (dropped %d), J=%d", data.n, data.n_dropped, data.J)

    ens = build_ensemble(data, args.b, args.seed, args.alpha, workers=args.workers)
    J = data.J
    if args.knots == "max":
        K = max_knots(J)
    elif args.knots == "cv":
        K = select_knots_cv(ens, range(0, max_knots(J) + 1))
    else:
        K = args.knots
        if K > max_knots(J):
            raise UsageError(f"--knots {K} exceeds the maximum {max_knots(J)} for J={J}")
    q_values = default_q_values(J) if args.q_max is None else list(range(1, args.q_max + 1))
    result = extrapolate_ensemble(ens, K, q_values, args.trim, args.alpha)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for name, writer in (
            ("orbits.csv", lambda p: write_table(orbit_rows(ens.observed), p)),
            ("extrapolation.csv", lambda p: write_table(extrapolation_rows(result), p)),
            ("trajectory.svg", lambda p: plot_trajectory(ens, result, p)),
        ):
            written.append(out / name)
            writer(out / name)
        manifest = {
            "command": "analyze",
            "config": {k: v for k, v in vars(args).items() if k not in ("config", "func")},
            "versions": _versions(),
            "seed": args.seed,
            "n": data.n,
            "n_dropped": data.n_dropped,
            "J": J,
            "covariates": list(data.names),
            "interior_knots": K,
            "elimination_order": list(ens.observed.elimination_order),
            "crossing_q": result.crossing_q,
        }
        written.append(out / "run.json")
        _write_json(manifest, out / "run.json")
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return EXIT_OK


def run_simulate(args) -> int:
    _validate_common(args)
    try:
        scenario = Scenario(study=args.study, p=args.p, q=args.q, delta=args.delta,
                            exposure_link=args.link if args.study == 2 else "logit",
                            N=args.population, n=args.n, replicates=args.replicates, B=args.b,
                            seed=args.seed, alpha=args.alpha, trim=args.trim)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.study == 1 and args.link != "logit":
        raise UsageError("study 1 uses a logit exposure model")
    report = run_study(scenario, workers=args.workers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        row = report.table_row()
        written.append(out / "report.csv")
        write_table([row], out / "report.csv")
        reps = report.replicates
        cols = ["replicate", "All", "All_covered", "Measured", "Measured_covered", "Predicted",
                "Predicted_covered", "Predicted_lower", "Predicted_upper", "error"]
        written.append(out / "replicates.csv")
        write_table([{c: r.get(c) for c in cols} for r in reps], out / "replicates.csv", cols)
        written.append(out / "report.svg")
        plot_report([row], out / "report.svg")
        written.append(out / "run.json")
        _write_json({"command": "simulate", "scenario": scenario_dict(scenario),
                     "versions": _versions(), "seed": args.seed,
                     "true_psi": report.true_psi,
                     "unmeasured": list(report.unmeasured_names),
                     "failures": report.failures}, out / "run.json")
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    stage = "arguments"
    try:
        args = _apply_config(parser, argv)
        stage = args.command
        runner = run_analyze if args.command == "analyze" else run_simulate
        return runner(args)
    except UsageError as exc:
        print(f"extrapsens: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"extrapsens {stage}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"extrapsens {stage}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
