#!/usr/bin/env python3
"""Run the acceptance tests and print one PASS/FAIL line per criterion."""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", str(ROOT / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider"],
        cwd=ROOT,
        capture_output=True,
        text=True,
    )
    lines = [l for l in proc.stdout.splitlines() if l.startswith("criterion ")]
    # the terminal summary repeats the per-test lines; keep the summary copy only
    seen = {}
    for line in lines:
        seen[line.split(":")[0]] = line
    print("\n".join(seen.values()))
    return proc.returncode


if __name__ == "__main__":
    sys.exit(main())
