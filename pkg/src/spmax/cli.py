"""Command-line entry point.

Exit codes: 0 success, 1 config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import sys

from . import experiments
from .data import DataError
from .experiments import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spmax", description="Success-probability allocation experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("sweep", "criterion of each method over a grid of difficulty levels"),
        ("optimize", "single optimizer run with its trace"),
        ("ingest", "RCT CSV to train/test stats JSON"),
        ("gen-synthetic", "ground-truth stats and samples for a preset"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="global seed (overrides the config)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="parallel grid points (sweep)")
        p.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        doc = experiments.load_config(args.config)
        if args.command == "sweep":
            path = experiments.cmd_sweep(doc, args.out, args.seed, args.threads, args.format)
            print(path)
        elif args.command == "optimize":
            summary = experiments.cmd_optimize(doc, args.out, args.seed, args.format)
            print(f"criterion {summary['criterion_final']:.6g}  stalled={summary['stalled']}")
        elif args.command == "ingest":
            for path in experiments.cmd_ingest(doc, args.out, args.seed):
                print(path)
        else:
            for path in experiments.cmd_gen_synthetic(doc, args.out, args.seed):
                print(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
