"""
Command-line entry point.

Usage:
    nenkf simulate  --config exp.toml --out data/ou
    nenkf filter    --config exp.toml --data data/ou --out outputs/ou-nenkf
    nenkf reference --config exp.toml --data data/ou --out outputs/ou-ref
    nenkf benchmark --config exp.toml --data data/ou --reference outputs/ou-ref --out outputs/ou-bench

Exit codes: 0 success, 2 invalid configuration or input, 3 numerical failure.
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional

from src.cli.commands import cmd_benchmark, cmd_filter, cmd_reference, cmd_simulate
from src.cli.config import ALGORITHMS, load_config
from src.core.errors import InferenceError, NumericalError
from src.utils.logger import setup_logger

logger = setup_logger("nenkf")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nenkf", description="Sequential Bayesian parameter inference for SDE models")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, default=None, help="Experiment TOML file")
        p.add_argument("--out", type=Path, required=True, help="Output directory")
        p.add_argument("--model", choices=["ou", "lv", "sir", "lorenz96"], default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--n-jobs", type=int, default=None)
        p.add_argument("--progress", action="store_true", default=None)

    simulate = sub.add_parser("simulate", help="Simulate a twin-experiment data set")
    common(simulate)
    simulate.add_argument("--n-obs", type=int, default=None)

    for name, help_text in (("filter", "Run one filter"), ("reference", "Run a long reference chain"),
                            ("benchmark", "Replicate a filter against a reference")):
        p = sub.add_parser(name, help=help_text)
        common(p)
        p.add_argument("--data", type=Path, required=True, help="Observations CSV or data set directory")
        p.add_argument("--algorithm", choices=ALGORITHMS, default=None)
        p.add_argument("--m", type=int, default=None, help="Parameter particles")
        p.add_argument("--n", type=int, default=None, help="Inner ensemble / particle count")
        if name == "reference":
            p.add_argument("--iterations", type=int, default=None)
            p.add_argument("--method", choices=["kf-exact", "pmmh", "emcmc"], default=None)
        if name == "benchmark":
            p.add_argument("--reference", type=Path, required=True, help="Directory holding reference.csv")
            p.add_argument("--replicates", type=int, default=None)
    return parser


def overrides_from(args: argparse.Namespace) -> dict:
    """CLI flags mapped onto config sections; unset flags stay None and are ignored."""
    get = lambda name: getattr(args, name, None)
    return {
        "model": {"name": get("model")},
        "algorithm": {"name": get("algorithm"), "m": get("m"), "n": get("n")},
        "run": {"seed": get("seed"), "n_jobs": get("n_jobs"), "replicates": get("replicates"), "progress": get("progress")},
        "simulate": {"n_obs": get("n_obs"), "seed": get("seed")},
        "reference": {"iterations": get("iterations"), "method": get("method")},
    }


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logger.info("=" * 80)
    logger.info(f"nenkf {args.command}")
    logger.info("=" * 80)

    try:
        cfg = load_config(args.config, overrides_from(args))
        if args.command == "simulate":
            paths = cmd_simulate(cfg, args.out)
        elif args.command == "filter":
            paths = cmd_filter(cfg, args.data, args.out)
        elif args.command == "reference":
            paths = cmd_reference(cfg, args.data, args.out)
        else:
            paths = cmd_benchmark(cfg, args.data, args.reference, args.out)
    except NumericalError as exc:
        logger.error(f"Numerical failure: {exc}", exc_info=True)
        return EXIT_NUMERICAL
    except (InferenceError, ValueError) as exc:
        logger.error(f"Invalid configuration or input: {exc}")
        return EXIT_INVALID

    for label, path in paths.items():
        logger.info(f"  {label}: {path}")
    logger.info("Done")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
