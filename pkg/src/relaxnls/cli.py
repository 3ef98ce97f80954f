"""Command-line driver for single runs, sweeps and the benchmark tables."""
from __future__ import annotations

import argparse
import sys

from .apost_estimators import CONVENTIONS, Constants
from .exceptions import ConfigurationError, SolverError
from .experiments import (
    PAPER_M,
    TABLE_COLUMNS,
    RunConfig,
    format_rows,
    soliton_problem,
    sweep,
    zero_problem,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

TABLE_DEGREES = {"table1": (1, 2, 3), "table2": (2,), "table3": (2,), "table4": (2,)}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="relaxnls",
        description="Relaxation Crank-Nicolson B-spline solver for the NLS with a posteriori estimates.",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--domain", nargs=2, type=float, default=(-30.0, 30.0), metavar=("A", "B"))
    common.add_argument("--T", type=float, default=1.0)
    common.add_argument("--p", type=float, default=1.0)
    common.add_argument("--alpha", type=float, default=1.0)
    common.add_argument("--lambda", dest="lam", type=float, default=2.0)
    common.add_argument("--degree", type=int, nargs="+", default=None, metavar="R")
    common.add_argument("--M", type=int, nargs="+", default=None, metavar="M")
    common.add_argument("--steps", type=int, default=None, help="override the coupled step count")
    common.add_argument("--problem", choices=("soliton", "zero"), default="soliton")
    common.add_argument("--x0", type=float, default=0.0)
    common.add_argument("--omega", type=float, default=0.3)
    common.add_argument("--constants-one", action="store_true", default=True,
                        help="set every absolute constant to one (default)")
    common.add_argument("--qspace", type=int, default=None, help="Gauss points per element")
    common.add_argument("--sinf", type=int, default=8, help="sample points per element for max norms")
    common.add_argument("--convention", choices=CONVENTIONS, default="table",
                        help="norm convention of the time and data estimators")
    common.add_argument("--precision", choices=("extended", "double"), default="extended",
                        help="long double residual correction in each step, or plain double")
    common.add_argument("--out", default=None, help="output path; stdout when omitted")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--columns", choices=sorted(TABLE_COLUMNS), default=None)

    sub.add_parser("run", parents=[common], help="one realization")
    sub.add_parser("sweep", parents=[common], help="a resolution sweep")
    for name in ("table1", "table2", "table3", "table4"):
        sub.add_parser(name, parents=[common], help=f"benchmark {name[:-1]} {name[-1]}")
    return ap


def configs_from_args(args) -> list[RunConfig]:
    a, b = args.domain
    if args.problem == "soliton":
        problem = soliton_problem(a, b, args.T, args.x0, args.omega, args.p, args.alpha, args.lam)
    else:
        problem = zero_problem(a, b, args.T, args.p, args.alpha, args.lam)
    table = args.command.startswith("table")
    Ms = args.M or (PAPER_M if args.command != "run" else (2400,))
    degrees = args.degree or (TABLE_DEGREES[args.command] if table else (2,))
    if args.command == "run":
        Ms, degrees = Ms[:1], degrees[:1]
    return [
        RunConfig(
            problem, M, r, N_override=args.steps, constants=Constants(),
            q_space=args.qspace, s_inf=args.sinf, convention=args.convention, fmt=args.format,
            extended=args.precision == "extended",
        )
        for r in degrees for M in Ms
    ]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    columns = args.columns or (args.command if args.command.startswith("table") else "full")
    cols = TABLE_COLUMNS[columns]
    try:
        configs = configs_from_args(args)
        out = args.out
        if out is not None and not out.endswith((".csv", ".json")):
            out = f"{out}.{args.format}"
        rows = sweep(configs, out=out, columns=cols)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, ArithmeticError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.out is None:
        sys.stdout.write(format_rows(rows, args.format, cols))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
