"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import EXPERIMENTS, ConfigError, parse_config
from .runner import RunError, emit, run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="TOML run file")
    p.add_argument("--seed", type=int, help="override seed_base")
    p.add_argument("--trajectories", type=int, help="override n_trajectories")
    p.add_argument("--out", help="override output_path")
    p.add_argument("--format", choices=("csv", "json"), help="override output_format")
    p.add_argument("--workers", type=int, help="worker processes (default: $XJUMP_WORKERS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xjump", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        _add_run_flags(sub.add_parser(name, help=f"run the {name} experiment"))
    val = sub.add_parser("validate", help="parse and validate a run file only")
    val.add_argument("--config", required=True)
    val.add_argument("--experiment", choices=EXPERIMENTS)
    return parser


def _load(path: str, experiment: str | None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc}") from exc
    return parse_config(text, experiment)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        if args.command == "validate":
            config = _load(args.config, args.experiment)
            print(json.dumps({"fingerprint": config.fingerprint(), "config": config.settings}, indent=2))
            return EXIT_OK
        config = _load(args.config, args.command).with_overrides(
            seed_base=args.seed,
            n_trajectories=args.trajectories,
            output_path=args.out,
            output_format=args.format,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        record = run(config, args.workers)
        emit(record, config.output_format, config.output_path)
    except (RunError, OSError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    failed = sum(1 for r in record.rows if r["error"] is not None)
    print(
        f"{config.experiment}: {len(record.rows) - failed}/{len(record.rows)} trajectories "
        f"-> {config.output_path} ({config.output_format})"
    )
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
