"""Command-line entry point: ``sureconf {run,plot,gen-data}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import report
from .experiment import ConfigError, generate_data, load_config, run_experiment
from .imaging import format_value


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sureconf",
        description="Self-supervised (SURE-calibrated) conformal prediction for linear imaging problems.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a coverage experiment and write tables and figures")
    run.add_argument("--config", required=True, help="experiment config (JSON)")
    run.add_argument("--seed", type=_u64, help="override the master seed")
    run.add_argument("--loo", action="store_true", help="leave-one-out thresholds on the calibration pool")
    run.add_argument("--out", help="override output_dir")
    run.add_argument("--workers", type=int, default=1, help="threads for per-sample work")

    plot = sub.add_parser("plot", help="render coverage.csv as an SVG figure")
    plot.add_argument("--curve", required=True, help="coverage CSV written by 'run'")
    plot.add_argument("--out", required=True, help="SVG path")

    gen = sub.add_parser("gen-data", help="write the simulated truth/measurement images")
    gen.add_argument("--config", required=True)
    gen.add_argument("--seed", type=_u64)
    gen.add_argument("--out", help="override output_dir")
    gen.add_argument("--workers", type=int, default=1)
    return parser


def _load(args):
    config = load_config(args.config, seed=args.seed, loo=getattr(args, "loo", False))
    if args.out:
        config.output_dir = args.out
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            config = _load(args)
            result = run_experiment(config, workers=args.workers)
            print(",".join(result.curve.columns))
            for row in result.curve.rows:
                print(",".join(format_value(v) for v in row))
            print(f"# outputs written to {config.output_dir}", file=sys.stderr)
        elif args.command == "plot":
            report.plot_coverage(report.read_coverage_curve(args.curve), args.out)
        else:
            config = _load(args)
            paths = generate_data(config, workers=args.workers)
            print(f"wrote {len(paths)} images to {config.output_dir}", file=sys.stderr)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"sureconf: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
