"""
Scenario configuration files: schema, loading, dotted overrides and model construction.

Energies are in units of ``1/beta_2`` and times in units of ``1/gamma`` (a
reference rate); every file carries a ``units`` field that is echoed into the
results.
"""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import InvalidInputError
from .model import FAMILIES, PEAKED, BathModel, GapWeights, MachineModel
from .optimize import OptimizerSettings
from .simple import SimpleRelaxModel

TASKS = ("validate", "optimize", "sweep-period", "contour", "many-qubit")

_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["units", "task"],
    "properties": {
        "units": {
            "type": "object",
            "additionalProperties": False,
            "required": ["energy", "time"],
            "properties": {"energy": {"type": "string"}, "time": {"type": "string"}, "power": {"type": "string"}},
        },
        "description": {"type": "string"},
        "task": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(TASKS)},
                "periods": {
                    "oneOf": [
                        {"type": "array", "items": _POSITIVE, "minItems": 1},
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["min", "max", "count"],
                            "properties": {"min": _POSITIVE, "max": _POSITIVE, "count": {"type": "integer", "minimum": 1}},
                        },
                    ]
                },
                "resolution": {"type": "integer", "minimum": 64},
                "machine": {"enum": ["engine", "refrigerator", "fridge"]},
                "n": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "cycle": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["mu", "bath", "control"],
                        "properties": {
                            "mu": {"type": "number", "minimum": 0},
                            "bath": {"type": "integer", "minimum": 0},
                            "control": {"type": "array", "items": _NUMBER, "minItems": 1},
                        },
                    },
                },
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dimension", "baths", "bounds"],
            "properties": {
                "dimension": {"type": "integer", "minimum": 2},
                "baths": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["beta", "family"],
                        "properties": {
                            "beta": _POSITIVE,
                            "family": {"enum": list(FAMILIES)},
                            "gamma": _POSITIVE,
                            "rate": _POSITIVE,
                            "targets": {"type": "array", "items": _NUMBER},
                            "rates": {
                                "type": "array",
                                "items": {
                                    "type": "object",
                                    "additionalProperties": False,
                                    "required": ["from", "to", "rate"],
                                    "properties": {
                                        "from": {"type": "integer", "minimum": 0},
                                        "to": {"type": "integer", "minimum": 0},
                                        "rate": {"type": "number", "minimum": 0},
                                    },
                                },
                            },
                            "tolerance": _POSITIVE,
                        },
                    },
                },
                "bounds": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2},
                },
            },
        },
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["engine", "refrigerator", "heater", "explicit"]},
                "c": {"type": "array", "items": _NUMBER, "minItems": 1},
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_legs": {"type": "integer", "minimum": 1},
                "starts": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "ftol": _POSITIVE,
                "xtol": _POSITIVE,
                "max_evals": {"type": "integer", "minimum": 1},
                "allow_more_legs_than_levels": {"type": "boolean"},
            },
        },
        "simple_model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["beta1", "beta2"],
            "properties": {"beta1": _POSITIVE, "beta2": _POSITIVE, "gamma1": _POSITIVE, "gamma2": _POSITIVE},
        },
    },
}


class ConfigError(InvalidInputError):
    """A configuration file that cannot be parsed or does not satisfy the schema."""


def _format_path(path) -> str:
    return "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in path).lstrip(".") or "<root>"


def validate_config(cfg: dict) -> dict:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{_format_path(e.absolute_path)}: {e.message}" for e in errors]
        raise ConfigError("configuration does not match the schema:\n  " + "\n  ".join(lines))
    return cfg


def parse_config_text(text: str, source: str = "<config>") -> dict:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{source}: the top level must be an object")
    return cfg


def load_config(path) -> dict:
    """Read a config file (or the name of a bundled config) without validating it."""
    p = Path(path)
    if not p.exists():
        bundled = resources.files("ottoforge") / "configs" / str(path)
        if bundled.is_file():
            return parse_config_text(bundled.read_text(), str(path))
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(p.read_text(), str(p))


def bundled_configs() -> list:
    root = resources.files("ottoforge") / "configs"
    return sorted(f.name for f in root.iterdir() if f.name.endswith(".json"))


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_override(cfg: dict, assignment: str) -> dict:
    """Set ``a.b.0.c=value`` in a copy of ``cfg``; ``value`` is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    out = copy.deepcopy(cfg)
    node = out
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(node, list):
            try:
                idx = int(part)
            except ValueError:
                raise ConfigError(f"override {key!r}: {part!r} is not a list index") from None
            if not 0 <= idx < len(node):
                raise ConfigError(f"override {key!r}: index {idx} out of range")
            if last:
                node[idx] = _parse_value(raw)
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if last:
                node[part] = _parse_value(raw)
            else:
                node = node.setdefault(part, {})
        else:
            raise ConfigError(f"override {key!r}: cannot descend into a scalar")
    return out


def build_bath(spec: dict) -> BathModel:
    family = spec["family"]
    beta = spec["beta"]
    if family == PEAKED:
        gammas = {(r["from"], r["to"]): r["rate"] for r in spec.get("rates", [])}
        kwargs = {"tol": spec["tolerance"]} if "tolerance" in spec else {}
        return BathModel.peaked(beta, spec.get("targets", []), gammas, **kwargs)
    if family == "fixed-rate":
        return BathModel.fixed_rate(beta, spec.get("rate", 1.0))
    return BathModel(beta, family, {"gamma": spec.get("gamma", 1.0)})


def build_model(cfg: dict) -> MachineModel:
    if "model" not in cfg:
        raise ConfigError("this task needs a 'model' block")
    m = cfg["model"]
    d = m["dimension"]
    bounds = m["bounds"]
    if len(bounds) == 1 and d > 2:
        bounds = bounds * (d - 1)
    if len(bounds) != d - 1:
        raise ConfigError(f"model.bounds: expected {d - 1} boxes (one per excited level), got {len(bounds)}")
    return MachineModel(tuple(build_bath(b) for b in m["baths"]), tuple(tuple(b) for b in bounds))


def build_weights(cfg: dict, model: MachineModel) -> GapWeights:
    w = cfg.get("weights", {"kind": "engine"})
    kind = w["kind"]
    if kind == "engine":
        return GapWeights.engine(model.n_baths)
    if kind == "heater":
        return GapWeights.heater(model.n_baths)
    if kind == "refrigerator":
        return GapWeights.refrigerator(model.betas)
    if "c" not in w:
        raise ConfigError("weights.c is required for explicit weights")
    if len(w["c"]) != model.n_baths:
        raise ConfigError(f"weights.c: expected {model.n_baths} entries, got {len(w['c'])}")
    return GapWeights(tuple(w["c"]))


def build_settings(cfg: dict) -> OptimizerSettings:
    o = cfg.get("optimizer", {})
    keys = ("starts", "seed", "ftol", "xtol", "max_evals")
    return OptimizerSettings(**{k: o[k] for k in keys if k in o})


def build_simple_model(cfg: dict) -> SimpleRelaxModel:
    if "simple_model" not in cfg:
        raise ConfigError("this task needs a 'simple_model' block")
    s = cfg["simple_model"]
    return SimpleRelaxModel(s["beta1"], s["beta2"], s.get("gamma1", 1.0), s.get("gamma2", 1.0), d=2)


def periods_from(task: dict) -> np.ndarray:
    p = task.get("periods", {"min": 0.01, "max": 10.0, "count": 40})
    if isinstance(p, dict):
        if p["max"] < p["min"]:
            raise ConfigError("task.periods: max must not be below min")
        return np.geomspace(p["min"], p["max"], p["count"])
    periods = np.asarray(p, dtype=float)
    if np.any(np.diff(periods) <= 0):
        raise ConfigError("task.periods must be strictly ascending")
    return periods
