"""Shared helpers for the demo scripts."""

import sys
from pathlib import Path


def output_dir(name: str) -> Path:
    """``demo_output/<name>`` under the current directory, or ``argv[1]`` if given."""
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_output")
    out = root / name
    out.mkdir(parents=True, exist_ok=True)
    return out
