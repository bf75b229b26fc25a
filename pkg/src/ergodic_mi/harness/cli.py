"""Command-line entry point ``ergodic-mi``.

Example::

    ergodic-mi sweep --config sweep.json --out sweep.csv --threads 4
"""

import argparse
from dataclasses import replace
import logging
import os
import sys

from .config import EXPERIMENTS, UNITS, ConfigError, load_config
from .experiments import run_experiment
from .rows import rows_to_csv

THREADS_ENV = "ERGODIC_MI_THREADS"

logger = logging.getLogger("ergodic_mi")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ergodic-mi",
        description="Estimate per-component mutual information of ergodic "
                    "block channels and write the results as CSV.")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--out", help="CSV destination (default: config output, else stdout)")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--threads", type=int, default=1,
                        help=f"worker threads (the {THREADS_ENV} variable takes precedence)")
    parser.add_argument("--units", choices=UNITS, help="override the configured units")
    parser.add_argument("--timing", action="store_true",
                        help="record wall-clock times (output is then not reproducible)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_threads(cli_value, environ=None):
    environ = os.environ if environ is None else environ
    raw = environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(THREADS_ENV, f"expected an integer, got {raw!r}") from None
    else:
        value = cli_value
    if value < 1:
        raise ConfigError("threads", "must be at least 1")
    return value


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        if config.experiment != args.experiment:
            raise ConfigError("experiment",
                              f"configuration is for {config.experiment!r}, "
                              f"not {args.experiment!r}")
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        units = args.units or config.units
        threads = resolve_threads(args.threads)
        rows = run_experiment(config, threads=threads, timing=args.timing)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    text = rows_to_csv(rows, units)
    out = args.out or config.output
    try:
        if out:
            with open(out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            logger.info("wrote %d rows to %s", len(rows), out)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
