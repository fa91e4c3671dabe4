"""Shared helpers for the experiment drivers: run a CLI task and read its CSV."""

from __future__ import annotations

import csv
import sys
from pathlib import Path

from ottoforge import cli


def run_task(task: str, config: str, out: Path, *extra: str) -> Path:
    """Run ``ottoforge <task>`` and return the output directory; exit on failure."""
    code = cli.main([task, "--config", config, "--out", str(out), *extra])
    if code != cli.EXIT_OK:
        sys.exit(f"ottoforge {task} --config {config} failed with exit code {code}")
    return out


def read_csv(path: Path) -> dict:
    """Columns of a CSV written by the CLI, as lists of floats (``nan`` kept)."""
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    return {key: [float(r[key]) for r in rows] for key in rows[0]}


def pyplot():
    """matplotlib.pyplot with a headless backend, or None when matplotlib is absent."""
    try:
        import matplotlib
    except ImportError:
        print("matplotlib not installed: skipping figures (CSV outputs are complete)")
        return None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt
