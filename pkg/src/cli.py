"""
Command line entry point.

    hierlap <kind> --config PATH [--seed N] [--workers N] [--out DIR] [--log-level LEVEL]
    hierlap compare --simulate PATH --bounds PATH [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 numerical feasibility error.
"""

import argparse
import logging
import sys
from collections.abc import Sequence

from pydantic import ValidationError

from src.experiments.compare import compare, load_result
from src.experiments.runners import run, write_results
from src.experiments.schemas import load_experiment
from src.load_config import CFG
from src.utils.app_utils import prepare_output_dir
from src.utils.errors import EXIT_CONFIG, EXIT_FEASIBILITY, EXIT_OK, ConfigError, HierlapError
from src.utils.utilities import setup_logging

LOGGER = logging.getLogger(__name__)

KINDS = ("spectrum", "simulate", "bounds", "dos", "verify")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hierlap",
        description="Poisson statistics of random hierarchical Laplacians on ultrametric trees.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        cmd = sub.add_parser(kind, help=f"run a {kind} experiment")
        cmd.add_argument("--config", required=True, help="experiment file (YAML or JSON)")
        cmd.add_argument("--seed", type=int, default=None, help="overrides the experiment seed")
        cmd.add_argument("--workers", type=int, default=None, help="worker processes")
        cmd.add_argument("--out", default=None, help="output directory")
        cmd.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")

    cmp = sub.add_parser("compare", help="compare simulated TV with the theoretical bound")
    cmp.add_argument("--simulate", required=True, help="simulate.json of a simulate run")
    cmp.add_argument("--bounds", required=True, help="bounds.json of a bounds run")
    cmp.add_argument("--out", default=None, help="output directory")
    cmp.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    return parser


def _run_compare(args: argparse.Namespace) -> None:
    simulate = load_result(args.simulate, "simulate")
    bounds = load_result(args.bounds, "bounds")
    rows = compare(simulate, bounds)
    out = prepare_output_dir(args.out if args.out is not None else CFG.results_dir)
    write_results("compare", rows, simulate["params"], simulate["seed"], out)
    failed = [row.ell for row in rows if row.passed is False]
    if failed:
        LOGGER.warning("levels above the bound: %s", failed)


def _run_kind(args: argparse.Namespace) -> None:
    if args.seed is not None and args.seed < 0:
        raise ConfigError("the seed must be non-negative", field="seed")
    if args.workers is not None and args.workers < 1:
        raise ConfigError("at least one worker is required", field="workers")
    config = load_experiment(args.config, kind=args.command)
    result = run(config, seed=args.seed, workers=args.workers, out=args.out)
    print(result.csv_path)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        setup_logging(args.log_level or CFG.log_level)
        if args.command == "compare":
            _run_compare(args)
        else:
            _run_kind(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return exc.exit_code
    except HierlapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValidationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, ValueError) as exc:
        LOGGER.exception("numerical failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FEASIBILITY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
