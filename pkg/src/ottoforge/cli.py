"""Command-line front end: ``ottoforge <task> --config FILE --out DIR``.

Exit codes: 0 success, 2 invalid input or failed model validation, 3 failed
optimization. Results go to ``DIR/result.json`` plus task-specific CSV tables;
run metadata (timestamps, argv) goes to ``DIR/metadata.json`` so that the
result files are byte-identical across runs with the same seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    TASKS,
    ConfigError,
    apply_override,
    build_model,
    build_settings,
    build_simple_model,
    build_weights,
    bundled_configs,
    load_config,
    periods_from,
    validate_config,
)
from .dynamics import sweep_period
from .errors import InvalidInputError, OptimizationFailedError
from .fast import GeneralizedOttoCycle, Leg
from .model import PEAKED, validate_model
from .optimize import OptimizationProblem, optimize_cycle
from .qutrit import PeakedScenario, contour_xy, xy_to_mu
from .simple import ENGINE, REFRIGERATOR, many_qubit_compare

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_OPTIMIZATION = 3

DEFAULT_MANY_QUBIT_N = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384)


# ---------------------------------------------------------------- output helpers


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    _atomic_write(path, buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def write_json(path: Path, data) -> None:
    _atomic_write(path, json.dumps(_jsonable(data), indent=2) + "\n")


# ---------------------------------------------------------------- task helpers


def _legs_json(cycle: GeneralizedOttoCycle, heats=None):
    legs = []
    for k, leg in enumerate(cycle.legs):
        entry = {"mu": leg.mu, "bath": leg.bath}
        for level, eps in enumerate(leg.control, start=2):
            entry[f"eps{level}"] = eps
        if heats is not None:
            entry["heat_rate"] = heats[k]
        legs.append(entry)
    return legs


def _cycle_from_task(task) -> GeneralizedOttoCycle | None:
    if "cycle" not in task:
        return None
    return GeneralizedOttoCycle(tuple(Leg(tuple(l["control"]), l["bath"], l["mu"]) for l in task["cycle"]))


def _validation_controls(model, cycle):
    if cycle is not None:
        return [(leg.control, leg.bath) for leg in cycle.legs]
    out = []
    for a, bath in enumerate(model.baths):
        if bath.family == PEAKED:
            out.append((bath.params["targets"], a))
        else:
            out.append((tuple(0.5 * (lo + hi) for lo, hi in model.bounds), a))
    return out


def _optimize(cfg, model, weights):
    opt = cfg.get("optimizer", {})
    problem = OptimizationProblem(
        model,
        weights,
        opt.get("max_legs", model.dim),
        build_settings(cfg),
        allow_more_legs_than_levels=opt.get("allow_more_legs_than_levels", False),
    )
    return optimize_cycle(problem)


def _trace_summary(trace):
    starts = [t for t in trace if isinstance(t["start"], int)]
    return {
        "local_searches": len(starts),
        "polish_steps": sum(1 for t in trace if t["start"] == "polish"),
        "consolidation_steps": sum(1 for t in trace if t["start"] == "consolidate"),
        "evaluations": int(sum(t["evaluations"] for t in trace)),
        "best_start_gap": max((t["final"] for t in starts), default=None),
    }


def run_validate(cfg, out: Path):
    model = build_model(cfg)
    cycle = _cycle_from_task(cfg["task"])
    controls = _validation_controls(model, cycle)
    for control, a in controls:
        if len(control) != model.dim - 1 or a >= model.n_baths:
            raise InvalidInputError(f"control {control} / bath {a} does not fit the model")
    report = validate_model([model.rate_matrix(c, a) for c, a in controls])
    result = {"task": "validate", "ok": report.ok, **report.as_dict()}
    if not report.ok:
        if report.unreachable:
            levels = sorted(l for comp in report.unreachable for l in comp)
            result["message"] = f"levels {levels} are not reachable from the ground level 0"
        else:
            result["message"] = "detailed balance is violated"
    return result, [], EXIT_OK if report.ok else EXIT_INVALID


def run_optimize(cfg, out: Path):
    model = build_model(cfg)
    weights = build_weights(cfg, model)
    res = _optimize(cfg, model, weights)
    result = {
        "task": "optimize",
        "gap": res.gap,
        "weights": list(weights.c),
        "effective_L": res.cycle.n_legs,
        "legs": _legs_json(res.cycle, res.leg_heat_rates),
        "raw": {"gap": res.raw_gap, "legs": _legs_json(res.raw_cycle)},
        "assignment": list(res.assignment),
        "trace": _trace_summary(res.trace),
    }
    return result, [_protocol_table(res.cycle, model)], EXIT_OK


def _protocol_table(cycle, model):
    """``protocol.csv``: one row per leg with start and end times in units of the period."""
    rows, t = [], 0.0
    for leg in cycle.legs:
        rows.append((t, t + leg.mu, leg.bath, *leg.control))
        t += leg.mu
    header = ["t_start", "t_end", "bath"] + [f"eps{k}" for k in range(2, model.dim + 1)]
    return ("protocol.csv", header, rows)


def run_sweep(cfg, out: Path):
    model = build_model(cfg)
    weights = build_weights(cfg, model)
    task = cfg["task"]
    cycle = _cycle_from_task(task)
    source = "config"
    if cycle is None:
        cycle = _optimize(cfg, model, weights).cycle
        source = "optimized"
    periods = periods_from(task)
    sweep = sweep_period(cycle, model, periods, weights)
    peak = max(sweep.fast_gap, float(np.max(sweep.gaps)))
    rows = [(0.0, sweep.fast_gap, sweep.fast_gap / peak, 0.0, True)]
    for T, g in zip(sweep.periods, sweep.gaps):
        rows.append((T, g, g / peak, sweep.eta * T, sweep.eta * T < 1e-2))
    result = {
        "task": "sweep-period",
        "cycle_source": source,
        "legs": _legs_json(cycle),
        "fast_gap": sweep.fast_gap,
        "eta": sweep.eta,
        "n_periods": int(periods.size),
        "monotone_nonincreasing": bool(np.all(np.diff(sweep.gaps) <= 1e-12 * abs(peak))),
    }
    header = ["period", "gap", "normalized_gap", "eta_period", "fast_regime"]
    return result, [("sweep.csv", header, rows), _protocol_table(cycle, model)], EXIT_OK


def _scenario_from_model(cfg):
    model = build_model(cfg)
    if model.dim != 3 or model.n_baths != 3 or any(b.family != PEAKED for b in model.baths):
        raise InvalidInputError("contour needs a three-level model with three peaked baths")
    return PeakedScenario(
        betas=tuple(b.beta for b in model.baths),
        targets=tuple(b.params["targets"] for b in model.baths),
        gammas=tuple(b.params["gammas"] for b in model.baths),
        bounds=model.bounds,
    ), model


def run_contour(cfg, out: Path):
    scenario, model = _scenario_from_model(cfg)
    weights = build_weights(cfg, model)
    res = contour_xy(scenario, cfg["task"].get("resolution", 256), weights)
    mus = xy_to_mu(*res.argmax)
    result = {
        "task": "contour",
        "argmax": {"x": res.argmax[0], "y": res.argmax[1]},
        "mu": mus.tolist(),
        "peak": res.peak,
        "boundary_argmax": {"x": res.boundary_argmax[0], "y": res.boundary_argmax[1]},
        "boundary_max": res.boundary_max,
        "interior_margin": res.margin,
        "interior": res.interior,
        "resolution": int(res.x.size),
    }
    rows = [(xi, yj, res.power[i, j]) for i, xi in enumerate(res.x) for j, yj in enumerate(res.y)]
    return result, [("contour.csv", ["x", "y", "power"], rows)], EXIT_OK


def run_many_qubit(cfg, out: Path):
    model = build_simple_model(cfg)
    task = cfg["task"]
    machine = task.get("machine", "engine")
    kind = REFRIGERATOR if machine in ("refrigerator", "fridge") else ENGINE
    ns = task.get("n", list(DEFAULT_MANY_QUBIT_N))
    rows = []
    for n in ns:
        c = many_qubit_compare(n, model, kind)
        rows.append((c.n, c.gap_interacting, c.gap_noninteracting, c.ratio, c.asymptote))
    result = {
        "task": "many-qubit",
        "machine": kind,
        "n": list(ns),
        "final_ratio": rows[-1][3],
        "final_asymptote": rows[-1][4],
    }
    header = ["n", "gap_I", "gap_NI", "ratio", "asymptote"]
    return result, [("many_qubit.csv", header, rows)], EXIT_OK


RUNNERS = {
    "validate": run_validate,
    "optimize": run_optimize,
    "sweep-period": run_sweep,
    "contour": run_contour,
    "many-qubit": run_many_qubit,
}


# ---------------------------------------------------------------- argument parsing


def parse_n_list(text: str):
    """``"1,2,4,...,64"`` -> ``[1, 2, 4, 8, 16, 32, 64]`` (geometric fill from the first two entries)."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if "..." not in parts:
        return [int(p) for p in parts]
    k = parts.index("...")
    head, tail = [int(p) for p in parts[:k]], [int(p) for p in parts[k + 1 :]]
    if len(head) < 2 or len(tail) != 1:
        raise ConfigError("an elided --n list needs two leading values and one final value")
    a, b, last = head[-2], head[-1], tail[0]
    out = list(head)
    if b % a == 0 and b // a > 1:
        ratio = b // a
        while out[-1] * ratio < last:
            out.append(out[-1] * ratio)
    else:
        step = b - a
        if step <= 0:
            raise ConfigError("an elided --n list must increase")
        while out[-1] + step < last:
            out.append(out[-1] + step)
    out.append(last)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ottoforge", description="Optimal generalized Otto cycles for quantum heat machines.")
    parser.add_argument("--version", action="version", version=f"ottoforge {__version__}")
    parser.add_argument("--list-configs", action="store_true", help="list the bundled configuration files and exit")
    sub = parser.add_subparsers(dest="task")
    for task in TASKS:
        p = sub.add_parser(task)
        p.add_argument("--config", required=True, help="JSON config file, or the name of a bundled config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry (dotted path)")
        p.add_argument("--seed", type=int, help="optimizer seed (same as --set optimizer.seed=N)")
        if task == "many-qubit":
            p.add_argument("--machine", choices=["engine", "refrigerator", "fridge"])
            p.add_argument("--n", help="comma-separated qubit counts; '1,2,4,...,16384' fills a geometric series")
        if task == "contour":
            p.add_argument("--resolution", type=int)
    return parser


def prepare_config(args) -> dict:
    cfg = load_config(args.config)
    for assignment in args.set:
        cfg = apply_override(cfg, assignment)
    if args.seed is not None:
        cfg = apply_override(cfg, f"optimizer.seed={args.seed}")
    cfg.setdefault("task", {})
    if isinstance(cfg["task"], dict):
        cfg["task"]["kind"] = args.task
    if getattr(args, "machine", None):
        cfg["task"]["machine"] = args.machine
    if getattr(args, "n", None):
        cfg["task"]["n"] = parse_n_list(args.n)
    if getattr(args, "resolution", None):
        cfg["task"]["resolution"] = args.resolution
    return validate_config(cfg)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_configs:
        print("\n".join(bundled_configs()))
        return EXIT_OK
    if args.task is None:
        parser.print_help()
        return EXIT_INVALID
    out = Path(args.out)
    started = datetime.now(timezone.utc)
    try:
        cfg = prepare_config(args)
        result, tables, code = RUNNERS[args.task](cfg, out)
    except OptimizationFailedError as exc:
        print(f"ottoforge: optimization failed: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZATION
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"ottoforge: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    result = {"units": cfg["units"], **result, "config": cfg}
    write_json(out / "result.json", result)
    for name, header, rows in tables:
        write_csv(out / name, header, rows)
    write_json(
        out / "metadata.json",
        {
            "version": __version__,
            "argv": list(sys.argv[1:] if argv is None else argv),
            "started": started.isoformat(),
            "finished": datetime.now(timezone.utc).isoformat(),
            "files": ["result.json"] + [t[0] for t in tables],
            "exit_code": code,
        },
    )
    if code != EXIT_OK:
        print(f"ottoforge: {result.get('message', 'validation failed')}", file=sys.stderr)
    else:
        print(f"ottoforge: {args.task} done -> {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
