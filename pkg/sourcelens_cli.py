#!/usr/bin/env python3
"""
SourceLens command line entry point.

Usage:
    python sourcelens_cli.py <subcommand> [--config PATH] [--out DIR] [--backend {oracle,lsq}]
                             [--case {1,2,iso1,iso2,general}] [--seed N] [--grid N]
                             [--render] [--log-level LEVEL]

Exit codes:
    0  success
    1  usage, configuration or admissibility error
    2  numerical failure (non-convergence, inconsistent data, degree overflow)
       or a geometry violation (trapping, non-convexity)
    3  I/O error
"""
import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional

from config import Config
from core.errors import (
    AdmissibilityError,
    ConfigError,
    GeometryError,
    NumericalFailure,
    SourceLensError,
)
from core.experiment_flow import ExperimentContext, build_context, run_subcommand
from storage.models import ArtifactStore
from utils.config import BACKEND_CHOICES, CASE_CHOICES, SUBCOMMANDS

logger = logging.getLogger("sourcelens")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


class UsageError(Exception):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _configure_logging(level: str) -> None:
    """Configure root logging once and route warnings through it."""
    numeric = getattr(logging, level.upper(), None)
    if not isinstance(numeric, int):
        raise UsageError(f"unknown log level {level!r}")
    logging.basicConfig(level=numeric, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    root = logging.getLogger()
    root.setLevel(numeric)
    logging.captureWarnings(True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sourcelens", description="Attenuated transport with scattering: forward and inverse source runs")
    parser.add_argument("subcommand", choices=SUBCOMMANDS, help="What to run")
    parser.add_argument("--config", help="JSON experiment document")
    parser.add_argument("--out", help="Output directory (overrides output.dir)")
    parser.add_argument("--backend", choices=BACKEND_CHOICES, help="Representative recovery backend")
    parser.add_argument("--case", choices=CASE_CHOICES, help="Source case")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--grid", type=int, help="Grid nodes per axis")
    parser.add_argument("--render", action="store_true", help="Also write grayscale bitmaps")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested config overrides for the flags that were given."""
    overrides: Dict[str, Any] = {}
    if args.out:
        overrides.setdefault("output", {})["dir"] = args.out
    if args.render:
        overrides.setdefault("output", {})["render"] = True
    if args.backend:
        overrides["reconstruction"] = {"backend": args.backend}
    if args.case:
        overrides["source"] = {"case": args.case}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.grid is not None:
        overrides["domain"] = {"grid_n": args.grid}
    return overrides


def _status_line(subcommand: str, summary: Dict[str, Any]) -> str:
    icon = "❌" if summary.get("passed") is False else "✅"
    return f"{icon} {subcommand}: {json.dumps(summary, default=str, sort_keys=True)}"


def _context(document: Dict[str, Any]) -> ExperimentContext:
    """Experiment context; a ValueError here is a configuration problem."""
    try:
        return build_context(document)
    except (ConfigError, AdmissibilityError):
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def run(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, run one subcommand and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        Config.setup()
        _configure_logging(args.log_level or Config.LOG_LEVEL)
    except UsageError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        document = Config.load(args.config, overrides_from_args(args))
    except (ConfigError, AdmissibilityError) as exc:
        print(f"❌ Configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"❌ Cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        store = ArtifactStore(document["output"]["dir"])
        with store.run(args.subcommand, document):
            summary = run_subcommand(args.subcommand, document, store, _context(document))
    except (ConfigError, AdmissibilityError) as exc:
        logger.error("%s failed: %s", args.subcommand, exc)
        return EXIT_USAGE
    except (NumericalFailure, GeometryError, ValueError) as exc:
        logger.error("%s failed: %s: %s", args.subcommand, type(exc).__name__, exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        logger.error("%s failed: I/O error: %s", args.subcommand, exc)
        return EXIT_IO
    except SourceLensError as exc:
        logger.error("%s failed: %s", args.subcommand, exc)
        return EXIT_NUMERICAL

    print(_status_line(args.subcommand, summary))
    logger.info("Artifacts in %s", store.root)
    if args.subcommand == "selftest" and not summary.get("passed", True):
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
