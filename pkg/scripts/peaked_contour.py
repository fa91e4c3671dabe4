#!/usr/bin/env python3
"""Fast-driving power of the three-bath peaked qutrit engine over the (x, y) box.

Also runs a smoke variant with the second and third bath at equal temperature
(beta_2 = beta_3, 1-based), where only two temperatures remain.

Outputs (to --out-dir): stated/ and equal_cold/ run directories (result.json,
contour.csv, metadata.json) and peaked_contour.png.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from _common import pyplot, read_csv, run_task


def grid(table):
    x, y = np.unique(table["x"]), np.unique(table["y"])
    power = np.asarray(table["power"]).reshape(x.size, y.size)
    return x, y, power


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=Path("out/peaked_contour"))
    ap.add_argument("--resolution", default="256")
    args = ap.parse_args()

    runs = {
        "stated": (),
        # 0-based bath 2 takes the temperature of bath 1
        "equal_cold": ("--set", "model.baths.2.beta=1.0"),
    }
    tables = {}
    for name, extra in runs.items():
        out = run_task("contour", "peaked_three_bath.json", args.out_dir / name, "--resolution", args.resolution, *extra)
        tables[name] = read_csv(out / "contour.csv")
        result = json.loads((out / "result.json").read_text())
        print(f"{name}: argmax (x, y) = {result['argmax']}, peak = {result['peak']:.10g}, "
              f"best edge = {result['boundary_max']:.10g}, interior = {result['interior']}")

    plt = pyplot()
    if plt is None:
        return
    fig, axes = plt.subplots(1, len(tables), figsize=(10, 4), constrained_layout=True)
    for ax, (name, table) in zip(axes, tables.items()):
        x, y, power = grid(table)
        im = ax.contourf(x, y, power.T, levels=40)
        i, j = np.unravel_index(np.nanargmax(power), power.shape)
        ax.plot(x[i], y[j], "r*", ms=10)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_title(name)
        fig.colorbar(im, ax=ax, label=r"power ($\gamma/\beta_2$)")
    fig.savefig(args.out_dir / "peaked_contour.png", dpi=150)


if __name__ == "__main__":
    main()
