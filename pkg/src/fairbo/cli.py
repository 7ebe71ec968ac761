"""Command line: ``fairbo run|validate <config>`` and ``fairbo summarize <dir>``.

Exit codes: 0 success, 1 config or input error, 2 partial failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment
from .errors import ConfigError, LoadError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairbo", description="Fairness-constrained hyperparameter tuning.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every strategy x seed in a config")
    run.add_argument("config")
    run.add_argument("--seed-offset", type=int, default=0, help="added to every configured seed")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    run.add_argument("--strategy", action="append", choices=sorted(experiment.STRATEGIES),
                     help="restrict to this strategy (repeatable)")
    run.add_argument("--output-dir", help="override the configured output directory")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")

    summ = sub.add_parser("summarize", help="summary table from an output directory")
    summ.add_argument("output_dir")
    summ.add_argument("--summary-seed", type=int, default=None)
    summ.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "summarize":
            rows = experiment.summarize(args.output_dir, args.summary_seed)
            print(json.dumps(rows, indent=2) if args.json else experiment.format_summary(rows))
            return experiment.EXIT_OK
        cfg = experiment.load_config(args.config)
        if args.command == "validate":
            n = len(cfg.strategies) * len(cfg.seeds)
            print(f"{args.config}: ok ({n} runs, T={cfg.budget}, T0={cfg.initial})")
            return experiment.EXIT_OK
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        if args.output_dir:
            cfg.output_dir = args.output_dir
        status = experiment.run_experiment(cfg, jobs=args.jobs, strategies=args.strategy,
                                           seed_offset=args.seed_offset)
        print(f"results written to {Path(cfg.output_dir)}")
        if status != experiment.EXIT_OK:
            print("some runs failed or aborted; see results.json", file=sys.stderr)
        return status
    except (ConfigError, LoadError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return experiment.EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
