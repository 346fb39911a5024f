"""Command-line experiment runner.

  mvforest simulate   simulation grid, one CSV row per (setting, method, repetition)
  mvforest bench      fit-only runtime statistics per (setting, method)
  mvforest gen        dump one simulated dataset as CSV
  mvforest concrete   UCI concrete slump study (k-fold CV per output subset + LOOCV)
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from . import simgen
from .concrete import RESULT_COLUMNS, load_concrete, run_concrete, write_rows
from .evaluation import METHOD_NAMES
from .grid import (BENCH_COLUMNS, SUMMARY_COLUMNS, ExperimentConfig, run_bench, run_grid,
                   read_rows, select_errors, summarize)
from .simgen import FeatureDependence, ResponseModel


def _split(values: Optional[List[str]]) -> Optional[List[str]]:
    """Accept both ``--x a b`` and ``--x a,b``."""
    if values is None:
        return None
    return [v for item in values for v in item.split(",") if v]


def _add_grid_filters(p: argparse.ArgumentParser, reps_default: int) -> None:
    p.add_argument("--models", nargs="+", help=f"subset of {[m.value for m in ResponseModel]}")
    p.add_argument("--dependence", nargs="+",
                   help=f"subset of {[d.value for d in FeatureDependence]}")
    p.add_argument("--rho", nargs="+", help="error correlations, from {0, 0.5, 0.9}")
    p.add_argument("--ell", nargs="+", help="corner exponents, from {1, 2}")
    p.add_argument("--n", nargs="+", help="sample sizes, from {100, 200, 500}")
    p.add_argument("--methods", nargs="+", help=f"subset of {list(METHOD_NAMES)}")
    p.add_argument("--reps", type=int, default=reps_default)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trees", type=int, default=500)
    p.add_argument("--threads", type=int, default=None, help="threads for tree growing")
    p.add_argument("--workers", type=int, default=1, help="parallel grid cells (processes)")
    p.add_argument("--out", required=True)


def _experiment_config(args) -> ExperimentConfig:
    models = _split(args.models) or [m.value for m in ResponseModel]
    deps = _split(args.dependence) or [d.value for d in FeatureDependence]
    for m in models:
        ResponseModel(m)
    for d in deps:
        FeatureDependence(d)
    rhos = [float(r) for r in _split(args.rho)] if args.rho else None
    ells = [int(e) for e in _split(args.ell)] if args.ell else None
    sizes = [int(n) for n in _split(args.n)] if args.n else list(simgen.SAMPLE_SIZES)
    return ExperimentConfig(
        models=models, dependencies=deps, errors=select_errors(rhos, ells), sizes=sizes,
        methods=_split(args.methods) or list(METHOD_NAMES), repetitions=args.reps,
        folds=args.folds, seed=args.seed, num_trees=args.trees, threads=args.threads,
        workers=getattr(args, "workers", 1),
    )


def cmd_simulate(args) -> int:
    config = _experiment_config(args)
    failures = run_grid(config, args.out)
    if args.summary:
        write_rows(summarize(read_rows(args.out)), args.summary, SUMMARY_COLUMNS)
    if failures:
        logging.error("%d grid cell(s) failed", failures)
    return 1 if failures else 0


def cmd_bench(args) -> int:
    write_rows(run_bench(_experiment_config(args)), args.out, BENCH_COLUMNS)
    return 0


def cmd_gen(args) -> int:
    cov = simgen.CovarianceSpec(args.rho, args.ell if args.rho != 0 else 1)
    setting = simgen.SimulationSetting(ResponseModel(args.model),
                                       FeatureDependence(args.dependence), cov, args.n)
    simgen.write_csv(simgen.generate(setting, args.seed, args.repetition), args.out)
    return 0


def cmd_concrete(args) -> int:
    data = load_concrete(args.data)
    rows = run_concrete(data, methods=_split(args.methods) or list(METHOD_NAMES),
                        repetitions=args.reps, folds=args.folds, seed=args.seed,
                        standardize=args.standardize, loocv=not args.no_loocv,
                        num_trees=args.trees, threads=args.threads)
    write_rows(rows, args.out, RESULT_COLUMNS)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvforest", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the simulation grid")
    _add_grid_filters(p, reps_default=50)
    p.add_argument("--summary", help="also write per-(setting, method) means here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="fit-time benchmark")
    _add_grid_filters(p, reps_default=10)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="write one simulated dataset")
    p.add_argument("--model", required=True, choices=[m.value for m in ResponseModel])
    p.add_argument("--dependence", default="independent",
                   choices=[d.value for d in FeatureDependence])
    p.add_argument("--rho", type=float, default=0.0, choices=[0.0, 0.5, 0.9])
    p.add_argument("--ell", type=int, default=1, choices=[1, 2])
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repetition", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("concrete", help="concrete slump study")
    p.add_argument("--data", required=True, help="path to slump_test.data")
    p.add_argument("--methods", nargs="+")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trees", type=int, default=500)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--standardize", choices=["global", "fold"], default="fold")
    p.add_argument("--no-loocv", action="store_true", help="skip the leave-one-out table")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_concrete)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"mvforest: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
