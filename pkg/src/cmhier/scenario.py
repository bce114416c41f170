"""Scenario files: strict JSON configuration for the command line.

A scenario names one of four run kinds and carries the initial data, model
parameters, integration controls, a seed for any randomness, and output
choices. Unknown keys are rejected so typos fail loudly; every constraint
violation names the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

KINDS = ("continuous", "discrete", "semidiscrete", "verify-all")
FORMATS = ("csv", "json-lines")

_DEFAULTS = {
    "seed": 0,
    "gamma": -2.0,
    "min_gap": 0.5,
    "out_dir": "out",
    "format": "csv",
    "tolerance_scale": 1.0,
    "dt": 1e-3,
    "direction": (1.0, 0.0),
    "p1": 1.0,
    "p2": 2.0,
    "steps": 10,
    "newton_tolerance": 1e-12,
    "chain_edges": 2,
    "tau_duration": 0.1,
    "tau_step": 1e-3,
}

_KNOWN_KEYS = {
    "kind", "n", "seed", "gamma", "min_gap", "out_dir", "format", "tolerance_scale",
    "positions", "momenta", "duration", "dt", "direction",
    "seed_prev", "seed_cur", "steps", "p1", "p2", "newton_tolerance",
    "chain_edges", "tau_duration", "tau_step",
}


@dataclass(frozen=True)
class Scenario:
    kind: str
    n: int
    seed: int = 0
    gamma: float = -2.0
    min_gap: float = 0.5
    out_dir: str = "out"
    format: str = "csv"
    tolerance_scale: float = 1.0
    # continuous
    positions: tuple | None = None
    momenta: tuple | None = None
    duration: float = 1.0
    dt: float = 1e-3
    direction: tuple = (1.0, 0.0)
    # discrete / semidiscrete
    seed_prev: tuple | None = None
    seed_cur: tuple | None = None
    steps: int = 10
    p1: float = 1.0
    p2: float = 2.0
    newton_tolerance: float = 1e-12
    chain_edges: int = 2
    tau_duration: float = 0.1
    tau_step: float = 1e-3


def _require_number(raw: dict, key: str, positive=False, nonnegative=False):
    if key not in raw:
        return
    value = raw[key]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ValidationError(f"field '{key}' must be a number")
    if positive and not value > 0:
        raise ValidationError(f"field '{key}' must be positive")
    if nonnegative and value < 0:
        raise ValidationError(f"field '{key}' must be nonnegative")


def _as_float_tuple(raw: dict, key: str, length: int | None = None):
    if key not in raw or raw[key] is None:
        return None
    value = raw[key]
    if not isinstance(value, (list, tuple)) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise ValidationError(f"field '{key}' must be a list of numbers")
    if length is not None and len(value) != length:
        raise ValidationError(f"field '{key}' must have exactly {length} entries, got {len(value)}")
    return tuple(float(v) for v in value)


def _validate_gaps(name: str, values: tuple, min_gap: float):
    arr = np.sort(np.asarray(values))
    if len(arr) > 1 and np.min(np.diff(arr)) < min_gap:
        raise ValidationError(f"field '{name}' violates the minimum gap {min_gap}")


def scenario_from_dict(raw: dict) -> Scenario:
    """Validate a raw mapping into a Scenario, applying defaults."""
    if not isinstance(raw, dict):
        raise ValidationError("scenario root must be an object")
    unknown = sorted(set(raw) - _KNOWN_KEYS)
    if unknown:
        raise ValidationError(f"unknown key '{unknown[0]}'")
    if "kind" not in raw:
        raise ValidationError("field 'kind' is required")
    if raw["kind"] not in KINDS:
        raise ValidationError(f"field 'kind' must be one of {KINDS}")
    kind = raw["kind"]

    if "n" not in raw:
        raise ValidationError("field 'n' is required")
    if not isinstance(raw["n"], int) or isinstance(raw["n"], bool) or raw["n"] < 1:
        raise ValidationError("field 'n' must be an integer >= 1")
    n = raw["n"]

    for key in ("dt", "tau_step", "newton_tolerance", "duration", "tau_duration"):
        _require_number(raw, key, positive=key != "duration", nonnegative=key == "duration")
    for key in ("gamma", "p1", "p2", "min_gap", "tolerance_scale"):
        _require_number(raw, key)
    if "seed" in raw and (not isinstance(raw["seed"], int) or isinstance(raw["seed"], bool)):
        raise ValidationError("field 'seed' must be an integer")
    for key in ("steps", "chain_edges"):
        if key in raw and (not isinstance(raw[key], int) or isinstance(raw[key], bool) or raw[key] < 1):
            raise ValidationError(f"field '{key}' must be an integer >= 1")
    if raw.get("format", "csv") not in FORMATS:
        raise ValidationError(f"field 'format' must be one of {FORMATS}")
    if raw.get("gamma", _DEFAULTS["gamma"]) == 0:
        raise ValidationError("field 'gamma' must be nonzero")
    if "tolerance_scale" in raw and raw["tolerance_scale"] < 0:
        raise ValidationError("field 'tolerance_scale' must be nonnegative")

    values = {
        "kind": kind,
        "n": n,
        "positions": _as_float_tuple(raw, "positions", n),
        "momenta": _as_float_tuple(raw, "momenta", n),
        "seed_prev": _as_float_tuple(raw, "seed_prev", n),
        "seed_cur": _as_float_tuple(raw, "seed_cur", n),
        "direction": _as_float_tuple(raw, "direction", 2) or _DEFAULTS["direction"],
    }
    for key, default in _DEFAULTS.items():
        if key != "direction":
            values[key] = raw.get(key, default)
    if "duration" in raw:
        values["duration"] = float(raw["duration"])
    else:
        values["duration"] = 1.0

    sc = Scenario(**values)

    if kind == "continuous" and sc.positions is not None:
        _validate_gaps("positions", sc.positions, sc.min_gap)
    if kind in ("discrete", "semidiscrete"):
        for name in ("seed_prev", "seed_cur"):
            seed = getattr(sc, name)
            if seed is not None:
                _validate_gaps(name, seed, sc.min_gap)
    if kind == "continuous" and (sc.positions is None) != (sc.momenta is None):
        raise ValidationError("fields 'positions' and 'momenta' must be given together")
    if sc.direction == (0.0, 0.0):
        raise ValidationError("field 'direction' must be nonzero")
    return sc


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario file; reports syntax errors with location."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scenario file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(raw)
