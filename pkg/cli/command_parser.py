"""
Command Parser
==============

Handles CLI argument parsing.
Follows SRP: Only handles command-line argument parsing and the mapping
of dedicated flags onto `section.field` config overrides.
"""

import argparse
import sys
from typing import Any, Dict, List, Optional

from core import settings
from services.postprocess_service import METHODS

SUBCOMMANDS = ("gen-data", "train-decoder", "simulate", "postprocess", "experiment", "report")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

# Dedicated flag -> config key
FLAG_KEYS = {
    "seed": "run.seed",
    "out": "run.out",
    "jobs": "run.jobs",
    "dump_dir": "run.dump_dir",
    "scale": "data.scale",
    "epochs": "train.epochs",
    "nt": "nms.nt",
    "lam": "dsa.lam",
    "scenario": "experiment.scenario",
}


class UsageError(Exception):
    """Raised instead of exiting so the entry point owns the exit status."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        raise UsageError(message)


class CommandParser:
    """
    Parser for command-line arguments.

    Follows SRP: Only handles argument parsing.
    """

    def __init__(self):
        """Initialize command parser."""
        self.parser = self._create_parser()

    def _add_common(self, parser: argparse.ArgumentParser, out_required: bool = False) -> None:
        parser.add_argument("--config", help="key=value config file (e.g. configs/desk.conf)")
        parser.add_argument(
            "--set", action="append", default=[], metavar="SECTION.FIELD=VALUE",
            help="Override one config key (repeatable)",
        )
        parser.add_argument("--seed", type=int, help=f"Master seed (fallback: ${settings.SEED_ENV_VAR})")
        parser.add_argument("--out", required=out_required, help="Artifact root directory")
        parser.add_argument("--jobs", type=int, help="Worker processes for scene-level tasks")
        parser.add_argument(
            "--log-level", default=settings.DEFAULT_LOG_LEVEL, type=str.upper, choices=LOG_LEVELS,
            help="Logging level (default: INFO)",
        )

    def _create_parser(self) -> argparse.ArgumentParser:
        """
        Create argument parser with all subcommands.

        Returns:
            Configured ArgumentParser
        """
        parser = _Parser(
            prog="DSA_CLI.py",
            description="Detection selection toolkit: datasets, decoders, post-processing and experiments",
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="""
Examples:
  # Generate desk-scale datasets
  python DSA_CLI.py gen-data --out artifacts --seed 7 --scale 0.1

  # Train one decoder per class
  python DSA_CLI.py train-decoder --config configs/desk.conf --out artifacts

  # Run a scenario and print its report
  python DSA_CLI.py experiment --config configs/desk.conf --out artifacts --scenario rotate10 --jobs 4
  python DSA_CLI.py report --out artifacts --scenario rotate10
            """,
        )
        sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
        sub.required = True

        gen = sub.add_parser("gen-data", help="Generate pairs, decoder, validation and test sets")
        self._add_common(gen, out_required=True)
        gen.add_argument("--scale", type=float, help="Dataset size multiplier")

        train = sub.add_parser("train-decoder", help="Train one decoder per class")
        self._add_common(train)
        train.add_argument("--epochs", type=int, help="Training epochs (>= 1)")
        train.add_argument("--classes", default="all", help='Class selection: "all", "8,9" or "1-4"')

        sim = sub.add_parser("simulate", help="Simulate detections for a dataset")
        self._add_common(sim)
        sim.add_argument("--dataset", default=settings.TEST_SUBDIR,
                         choices=(settings.VALIDATION_SUBDIR, settings.TEST_SUBDIR))
        sim.add_argument("--profile", default="baseline", choices=sorted(settings.NOISE_PROFILES))
        sim.add_argument("--detections", help="Output directory (default: <out>/detections/<dataset>)")

        post = sub.add_parser("postprocess", help="Select detections with one method")
        self._add_common(post)
        post.add_argument("--method", required=True, choices=METHODS)
        post.add_argument("--dataset", default=settings.TEST_SUBDIR,
                          choices=(settings.VALIDATION_SUBDIR, settings.TEST_SUBDIR))
        post.add_argument("--detections", help="Input directory (default: <out>/detections/<dataset>)")
        post.add_argument("--output", help="Output directory (default: <out>/selected/<method>)")
        post.add_argument("--nt", type=float, help="Suppression overlap threshold")
        post.add_argument("--threshold", type=float, help="Final score threshold for baselines")
        post.add_argument("--lam", type=float, help="Per-object penalty for DSA methods")
        post.add_argument("--dump-dir", help="Dump canvases and loss traces here")
        post.add_argument("--invalidate-cache", action="store_true",
                          help="Recompute reconstructions for every candidate subset")

        exp = sub.add_parser("experiment", help="Run one scenario end to end")
        self._add_common(exp)
        exp.add_argument("--scenario", choices=sorted(settings.SCENARIOS))
        exp.add_argument("--scale", type=float, help="Dataset size multiplier (must match gen-data)")
        exp.add_argument("--dump-dir", help="Dump canvases and loss traces here")
        exp.add_argument("--invalidate-cache", action="store_true",
                         help="Recompute reconstructions for every candidate subset")
        exp.add_argument("--matched", action="store_true", help="Also report IoU-matched accuracy")

        report = sub.add_parser("report", help="Print a scenario's report table")
        self._add_common(report)
        report.add_argument("--scenario", choices=sorted(settings.SCENARIOS))
        report.add_argument("--reports", help="Explicit reports.csv path")

        return parser

    def parse_args(self, args: Optional[List[str]] = None) -> Any:
        """
        Parse command-line arguments.

        Args:
            args: Arguments to parse (default: sys.argv)

        Returns:
            Parsed arguments namespace
        """
        return self.parser.parse_args(args)

    def config_overrides(self, args: Any) -> Dict[str, str]:
        """
        Translate dedicated flags into config overrides.

        Args:
            args: Parsed arguments namespace

        Returns:
            Mapping of `section.field` to raw value text
        """
        overrides: Dict[str, str] = {}
        for flag, key in FLAG_KEYS.items():
            value = getattr(args, flag, None)
            if value is not None:
                overrides[key] = str(value)
        if getattr(args, "invalidate_cache", False):
            overrides["dsa.cache_mode"] = "invalidate"
        if getattr(args, "matched", False):
            overrides["experiment.matched_accuracy"] = "true"
        return overrides
