#!/usr/bin/env python3
"""Optimal qutrit engines (fermionic and bosonic baths) and their power versus period.

For each bath kind the three-leg-budget optimum is computed in the fast-driving
limit, then its exact limit-cycle power is evaluated at 40 log-spaced periods.

Outputs (to --out-dir): fermionic/ and bosonic/ run directories (result.json,
protocol.csv, sweep.csv, metadata.json) and qutrit_period_sweep.png.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from _common import pyplot, read_csv, run_task

KINDS = ("fermionic", "bosonic")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=Path("out/qutrit_sweep"))
    ap.add_argument("--seed", default="0")
    args = ap.parse_args()

    sweeps, protocols = {}, {}
    for kind in KINDS:
        out = run_task("sweep-period", f"{kind}_qutrit.json", args.out_dir / kind, "--seed", args.seed)
        sweeps[kind] = read_csv(out / "sweep.csv")
        protocols[kind] = read_csv(out / "protocol.csv")
        fast = sweeps[kind]["gap"][0]
        print(f"{kind}: fast-driving GAP = {fast:.10g}, legs = {len(protocols[kind]['bath'])}")

    plt = pyplot()
    if plt is None:
        return
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5), constrained_layout=True)
    for kind in KINDS:
        s = sweeps[kind]
        axes[0].semilogx(s["period"][1:], s["normalized_gap"][1:], "o-", ms=3, label=kind)
    axes[0].set_xlabel(r"period $T\gamma$")
    axes[0].set_ylabel("P(T) / P(fast)")
    axes[0].legend()
    for ax, kind in zip(axes[1:], KINDS):
        p = protocols[kind]
        levels = [k for k in p if k.startswith("eps")]
        for style, level in zip(("-", "--", ":", "-."), levels):
            xs, ys = [], []
            for t0, t1, e in zip(p["t_start"], p["t_end"], p[level]):
                xs += [t0, t1]
                ys += [e, e]
            ax.plot(xs, ys, style, label=level)
        ax.set_xlabel("t / T")
        ax.set_ylabel(r"$\epsilon$ (units of $1/\beta_2$)")
        ax.set_title(f"{kind} protocol")
        ax.legend()
    fig.savefig(args.out_dir / "qutrit_period_sweep.png", dpi=150)


if __name__ == "__main__":
    main()
