"""
Run configuration: JSON schema, named presets and default resolution.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .bloch import SumCutoff
from .geometry import (X_HAT, Y_HAT, Z_HAT, LatticeSpec, PolarizationFrame, anti_inversion_azimuth,
                       azimuth_vector, helix_lattice, polarization_frame, prism_lattice)

NAMED_AXES = ("z", "x", "y", "phi0", "inplane_45")
MODES = ("hermitian", "full", "both")

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_AXIS = {"oneOf": [{"type": "string", "enum": list(NAMED_AXES)}, _VEC3]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "chiral-bands run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"type": "string"},
        "lattice": {
            "type": "object",
            "oneOf": [
                {
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "helix"},
                        "n_sublattices": {"type": "integer", "minimum": 1},
                        "radius": {"type": "number", "exclusiveMinimum": 0},
                        "period": {"type": "number", "exclusiveMinimum": 0},
                        "handedness": {"enum": ["right", "left"]},
                    },
                    "required": ["kind"],
                },
                {
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "prism"},
                        "radius": {"type": "number", "exclusiveMinimum": 0},
                        "period": {"type": "number", "exclusiveMinimum": 0},
                    },
                    "required": ["kind"],
                },
                {
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "explicit"},
                        "period": {"type": "number", "exclusiveMinimum": 0},
                        "basis": {"type": "array", "items": _VEC3, "minItems": 1},
                        "axis": _VEC3,
                    },
                    "required": ["kind", "period", "basis"],
                },
            ],
        },
        "quantization_axis": _AXIS,
        "frame_reference": {"oneOf": [_AXIS, {"type": "null"}]},
        "mode": {"enum": list(MODES)},
        "grids": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "band_points": {"type": "integer", "minimum": 3},
                "zak_points": {"type": "integer", "minimum": 5},
            },
        },
        "cutoff": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_cells": {"type": "integer", "minimum": 1},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "tail": {"enum": ["euler", "none"]},
            },
        },
        "topology": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gap_floor": {"type": "number", "minimum": 0},
                "quant_tol": {"type": "number", "exclusiveMinimum": 0},
                "manifolds": {
                    "oneOf": [
                        {"type": "null"},
                        {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 1},
                                                    "minItems": 1}},
                    ]
                },
                "biorthogonal": {"type": "boolean"},
            },
        },
        "symmetry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "spin_floor": {"type": "number", "exclusiveMinimum": 0},
                "noise_floor": {"type": "number", "exclusiveMinimum": 0},
                "k_samples": {"type": "integer", "minimum": 1},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "boolean"} for k in
                           ("band_csv", "spin_csv", "symmetry_json", "topology_json", "plotdata")},
        },
        "output_dir": {"type": "string", "minLength": 1},
    },
}

DEFAULTS = {
    "lattice": {"kind": "helix", "n_sublattices": 3, "radius": 0.05, "period": 0.175, "handedness": "right"},
    "quantization_axis": "z",
    "frame_reference": None,
    "mode": "both",
    "grids": {"band_points": 501, "zak_points": 2001},
    "cutoff": {"max_cells": 2000, "tolerance": 1e-5, "tail": "euler"},
    "topology": {"gap_floor": 1e-3, "quant_tol": 1e-2, "manifolds": None, "biorthogonal": True},
    "symmetry": {"tol": 1e-6, "spin_floor": 1e-3, "noise_floor": 1e-6, "k_samples": 16},
    "outputs": {"band_csv": True, "spin_csv": True, "symmetry_json": True, "topology_json": True,
                "plotdata": True},
    "output_dir": "chiral_bands_out",
}

_HELIX = {"kind": "helix", "n_sublattices": 3, "radius": 0.05, "period": 0.175, "handedness": "right"}
_PRISM = {"kind": "prism", "radius": 0.05, "period": 0.175}

PRESETS = {
    "fig3": {"lattice": _HELIX, "quantization_axis": "z", "frame_reference": "phi0", "mode": "both"},
    "fig4": {"lattice": _HELIX, "quantization_axis": "phi0", "mode": "both"},
    "fig5": {"lattice": _HELIX, "quantization_axis": "inplane_45", "mode": "both"},
    "fig6_qx": {"lattice": _PRISM, "quantization_axis": "x", "mode": "both"},
    "fig6_qy": {"lattice": _PRISM, "quantization_axis": "y", "mode": "both"},
}


class ConfigError(ValueError):
    """Invalid or unreadable configuration (CLI exit code 2)."""


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key != "lattice":
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _error_path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def validate(data) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = [f"{_error_path(e)}: {e.message}" for e in errors]
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines))


def resolve(data: dict, preset: Optional[str] = None) -> dict:
    """Validate, then layer defaults < preset < explicit fields."""
    validate(data)
    name = preset or data.get("preset")
    resolved = copy.deepcopy(DEFAULTS)
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
        resolved = _merge(resolved, PRESETS[name])
        resolved["preset"] = name
    body = {k: v for k, v in data.items() if k != "preset"}
    resolved = _merge(resolved, body)
    lat = resolved["lattice"]
    if lat["kind"] == "helix":
        lat = _merge({k: v for k, v in _HELIX.items()}, lat)
    elif lat["kind"] == "prism":
        lat = _merge(dict(_PRISM), lat)
    else:
        lat.setdefault("axis", [0.0, 0.0, 1.0])
    resolved["lattice"] = lat
    validate(resolved)
    return resolved


def load(path, preset: Optional[str] = None) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if not text.strip():
        raise ConfigError(f"{path}: empty file is not a valid configuration")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return resolve(data, preset)


def named_axis(value, n_sublattices: int) -> np.ndarray:
    if isinstance(value, str):
        return {
            "z": Z_HAT,
            "x": X_HAT,
            "y": Y_HAT,
            "phi0": azimuth_vector(anti_inversion_azimuth(n_sublattices)),
            "inplane_45": azimuth_vector(np.pi / 4),
        }[value].copy()
    return np.asarray(value, dtype=float)


@dataclass(frozen=True, eq=False)
class RunSetup:
    lattice: LatticeSpec
    frame: PolarizationFrame
    modes: tuple
    cutoff: SumCutoff


def build(cfg: dict) -> RunSetup:
    """Turn a resolved configuration into lattice, frame, modes and cutoff."""
    lat = cfg["lattice"]
    if lat["kind"] == "helix":
        n = lat["n_sublattices"]
        lattice = helix_lattice(n, lat["radius"], lat["period"], lat["handedness"])
    elif lat["kind"] == "prism":
        n = 3
        lattice = prism_lattice(lat["radius"], lat["period"])
    else:
        lattice = LatticeSpec(period=lat["period"], basis=np.asarray(lat["basis"], float), axis=lat["axis"])
        n = lattice.n_sublattices
    q = named_axis(cfg["quantization_axis"], n)
    ref = cfg.get("frame_reference")
    frame = polarization_frame(q, None if ref is None else named_axis(ref, n))
    lattice = lattice.with_quantization_axis(frame.q)
    modes = ("hermitian", "full") if cfg["mode"] == "both" else (cfg["mode"],)
    c = cfg["cutoff"]
    return RunSetup(lattice, frame, modes, SumCutoff(c["max_cells"], c["tolerance"], c["tail"]))
