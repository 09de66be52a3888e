"""
MLVGAN command line.
"""

import argparse

from ..config import get_settings
from .commands import (
    cmd_consistency,
    cmd_estimate,
    cmd_eval,
    cmd_generate,
    cmd_interpolate,
    cmd_presets,
    cmd_train,
    cmd_train_embedder,
)


def _add_config(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", nargs="?", help="Run document (JSON)")
    parser.add_argument("--preset", help="Use a predefined run document instead of a file")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one sub-command per operation."""
    settings = get_settings()
    parser = argparse.ArgumentParser(prog="mlvgan", description=settings.app_name)
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    parser.add_argument("--seed", type=int, default=None, help="Seed for every random source")
    parser.add_argument(
        "--output-root",
        default=settings.output_root,
        help="Parent directory of run directories (env MLVGAN_OUTPUT_ROOT)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Train a model")
    _add_config(p)
    p.add_argument("--run-dir", help="Run directory (default: <output-root>/<name>)")
    p.add_argument("--resume", action="store_true", help="Continue from the newest snapshot")
    p.add_argument("--dry-run", action="store_true", help="Validate and print the cost table only")
    p.add_argument("--max-iterations", type=int, default=None)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("generate", help="Sample videos from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("-n", type=int, default=1, help="Number of clips")
    p.add_argument("--label", type=int, default=None, help="Class label (conditional models)")
    p.add_argument("--out", default="samples", help="Output directory")
    p.add_argument("--grid", default=None, help="Write a frame grid PNG to this path")
    p.add_argument("--stride", type=int, default=1, help="Keep every n-th frame in the grid")
    p.add_argument("--gif", action="store_true", help="Also write animated GIFs")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("interpolate", help="Videos along a segment between two noise vectors")
    p.add_argument("checkpoint")
    p.add_argument("--seed1", type=int, default=0)
    p.add_argument("--seed2", type=int, default=1)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--label", type=int, default=None)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out", default="interpolation")
    p.set_defaults(handler=cmd_interpolate)

    p = sub.add_parser("eval", help="Score every snapshot of a run")
    p.add_argument("run_dir")
    p.add_argument("--config", default=None, help="Run document (default: the one stored in the snapshots)")
    p.add_argument("--preset", default=None)
    p.add_argument("--embedder", default=None, help="Embedder file (default: <run_dir>/embedder.pt)")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--out", default=None, help="Score table CSV (default: <run_dir>/scores.csv)")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("estimate", help="Print the analytic cost table")
    _add_config(p)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--csv", default=None, help="Also write the table as CSV")
    p.add_argument("--budget", type=int, default=None, help="Recommend a schedule for this many bytes")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("consistency", help="PSNR/SSIM between level 1 and level L per frame")
    p.add_argument("checkpoint")
    p.add_argument("-n", type=int, default=1000, help="Number of samples")
    p.add_argument("--label", type=int, default=None)
    p.add_argument("--out", default="consistency.csv")
    p.set_defaults(handler=cmd_consistency)

    p = sub.add_parser("train-embedder", help="Train the classifier used for IS and FID")
    _add_config(p)
    p.add_argument("--run-dir", default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--out", default=None, help="Embedder file (default: <run_dir>/embedder.pt)")
    p.set_defaults(handler=cmd_train_embedder)

    p = sub.add_parser("presets", help="List presets or print one")
    p.add_argument("name", nargs="?")
    p.set_defaults(handler=cmd_presets)

    return parser


__all__ = ["build_parser"]
