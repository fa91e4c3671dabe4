#!/usr/bin/env python3
"""Interacting versus non-interacting many-qubit machines.

Runs the engine and refrigerator many-qubit tasks for n = 1, 2, 4, ..., 2^14
and plots GAP_I / GAP_NI against n together with the large-n asymptote.

Outputs (to --out-dir): engine/ and refrigerator/ run directories (result.json,
many_qubit.csv, metadata.json) and many_qubit_ratio.png.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from _common import pyplot, read_csv, run_task


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=Path("out/many_qubit"))
    ap.add_argument("--n", default="1,2,4,...,16384", help="qubit counts (CLI list syntax)")
    args = ap.parse_args()

    tables = {}
    for machine, config in (("engine", "many_qubit_engine.json"), ("refrigerator", "many_qubit_fridge.json")):
        out = run_task("many-qubit", config, args.out_dir / machine, "--n", args.n)
        tables[machine] = table = read_csv(out / "many_qubit.csv")
        print(f"{machine}: n = {int(table['n'][-1])}, GAP_I/GAP_NI = {table['ratio'][-1]:.6f}")

    plt = pyplot()
    if plt is None:
        return
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), constrained_layout=True)
    for ax, (machine, table) in zip(axes, tables.items()):
        ax.semilogx(table["n"], table["ratio"], "o-", ms=3, label="optimized")
        asym = [a / (n * table["gap_NI"][0]) for a, n in zip(table["asymptote"], table["n"])]
        ax.semilogx(table["n"], asym, "--", label="large-n asymptote")
        ax.set_xlabel("n (qubits)")
        ax.set_ylabel(r"GAP$_I$ / GAP$_{NI}$")
        ax.set_title(machine)
        ax.legend()
    fig.savefig(args.out_dir / "many_qubit_ratio.png", dpi=150)


if __name__ == "__main__":
    main()
