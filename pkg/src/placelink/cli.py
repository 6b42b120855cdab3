"""Command-line entry point.

Subcommands: gen-data, simulate, dsi-demo, inspect-stats. Exit codes: 0 on
success, 2 for configuration errors, 3 for I/O or data errors, 4 for numeric
failures.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_experiment_config
from .core import ConfigError, DataError, NumericError
from .runner import dsi_demo, gen_data, inspect_stats, resolve_out_dir, simulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _parse_seeds(text):
    if text is None:
        return None
    try:
        return tuple(int(s) for s in text.split(",") if s.strip() != "")
    except ValueError:
        raise ConfigError(f"--seeds expects a comma-separated integer list, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="placelink",
        description="Simulate knowledge transfer between black-box place-recognition models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, seeds=False, jobs=False):
        p.add_argument("--config", required=True, help="experiment config (TOML)")
        p.add_argument("--out", default=None, help="output directory (overrides config and env)")
        if seeds:
            p.add_argument("--seeds", default=None, help="comma-separated seed list")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    add_common(sub.add_parser("gen-data", help="generate the session CSVs and manifest"))
    add_common(
        sub.add_parser("simulate", help="run the scenario sweep and write results.csv"),
        seeds=True,
        jobs=True,
    )
    add_common(
        sub.add_parser("dsi-demo", help="compare fine-tuning, replay, and analytic fusion"),
        seeds=True,
    )
    inspect = sub.add_parser("inspect-stats", help="summarize a serialized statistics message")
    inspect.add_argument("path", help="stats message file")
    return parser


def run(args) -> int:
    if args.command == "inspect-stats":
        print(inspect_stats(args.path))
        return EXIT_OK

    config = load_experiment_config(args.config)
    out_root = resolve_out_dir(config, args.out)
    if args.command == "gen-data":
        manifest_path = gen_data(config, out_root)
        print(f"wrote {manifest_path}")
    elif args.command == "simulate":
        results_path = simulate(
            config, out_root, seeds=_parse_seeds(args.seeds), jobs=max(1, args.jobs)
        )
        print(f"wrote {results_path}")
    elif args.command == "dsi-demo":
        rows = dsi_demo(config, out_root, seeds=_parse_seeds(args.seeds))
        print(f"wrote {out_root / 'dsi_demo.csv'} ({len(rows)} rows)")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
