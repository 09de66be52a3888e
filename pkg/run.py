#!/usr/bin/env python3
"""
MLVGAN - Multi-level Video GAN

Quick start script: trains the small CPU preset, then writes a sample grid.
"""

import sys
from pathlib import Path

from mlvgan.config import get_settings
from mlvgan.main import main

if __name__ == "__main__":
    settings = get_settings()
    run_dir = Path(settings.output_root) / "desk-16px"

    print("""
    MLVGAN - Multi-level Video GAN
    Sparse training, dense generation
    """)
    print(f"   Run directory: {run_dir}")
    print()

    code = main(["train", "--preset", "desk-16px", "--run-dir", str(run_dir)])
    if code == 0:
        code = main([
            "generate", str(run_dir / "final.pt"),
            "-n", "8",
            "--out", str(run_dir / "samples"),
            "--grid", str(run_dir / "samples" / "grid.png"),
            "--stride", "2",
        ])
    sys.exit(code)
