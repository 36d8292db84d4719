"""Command-line entry point: ``fenelab <mode> --config <path> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import FenelabError
from .config import MODES, parse_config
from .runner import run

__all__ = ["build_parser", "main"]

EXIT_CHECKS_FAILED = 1
EXIT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fenelab",
        description="Simulate and verify the compressible co-rotation FENE model.")
    sub = parser.add_subparsers(dest="mode", required=True, metavar="MODE")
    helps = {
        "simulate": "coupled flow/configuration run with energy diagnostics",
        "picard": "lagged linear (Picard) iteration and its contraction",
        "linear-decay": "L2 decay law of the linearised flow",
        "spectrum": "spectrum of the configuration operator and the flow symbol",
        "inequalities": "randomised Poincare/stress/Hardy inequality suites",
    }
    for mode in MODES:
        p = sub.add_parser(mode, help=helps[mode])
        p.add_argument("--config", required=True, type=Path, help="configuration file")
        p.add_argument("--out", help="output directory (overrides [output] directory)")
        p.add_argument("--workers", type=int, help="worker threads (overrides [run] workers)")
        p.add_argument("--seed", type=int, help="seed (overrides [initial] seed)")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return parser


def main(argv: list[str] | None = None) -> int:
    """Run the CLI; returns 0 iff all enabled checks pass."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"fenelab: error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        config = parse_config(text, mode=args.mode).with_overrides(args.out, args.workers, args.seed)
        outcome = run(config)
    except FenelabError as exc:
        print(f"fenelab: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for check in outcome.checks:
        print(f"{check.label}  {check.name}: {check.detail}")
    print(f"report: {outcome.directory / 'report.txt'}")
    return outcome.exit_status


if __name__ == "__main__":
    sys.exit(main())
