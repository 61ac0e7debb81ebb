"""Command-line entry point for the benchmark harness.

    bench run --task vqe-tfim --config runs/vqe.toml --out runs/vqe \\
              --seeds 10 [--optimizer santaqlaus] [--noise on]
"""

from __future__ import annotations

import argparse
import sys

from ..optimizers import METHODS
from .config import TASKS, ConfigError, load_config
from .runner import run_experiment


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description=(
            "Run shot-budgeted optimizer benchmarks and write per-run "
            "trace CSVs plus median/quartile learning-curve aggregates."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser(
        "run", help="run one task over a seed range and emit CSV files"
    )
    run.add_argument("--task", required=True, choices=TASKS,
                     help="benchmark task to run")
    run.add_argument("--config", required=True, metavar="PATH",
                     help="TOML run configuration")
    run.add_argument("--out", required=True, metavar="DIR",
                     help="output directory (created if missing)")
    run.add_argument("--seeds", required=True, type=_positive_int,
                     metavar="K", help="number of seeds, run as 0..K-1")
    run.add_argument("--optimizer", choices=METHODS,
                     help="run a single optimizer (default: all three)")
    run.add_argument("--noise", choices=("on", "off"),
                     help="override the config's noise toggle")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.task)
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        for message in exc.errors:
            print(f"config error: {message}", file=sys.stderr)
        return 2
    methods = (args.optimizer,) if args.optimizer else None
    written = run_experiment(
        cfg, args.out, args.seeds,
        methods=methods, noise_override=args.noise,
    )
    for path in written:
        print(path)
    return 0
