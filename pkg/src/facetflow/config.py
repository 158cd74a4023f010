"""Run configuration: YAML loading, schema validation and object builders."""

from __future__ import annotations

import copy
from pathlib import Path

import jsonschema
import yaml

from .model import ForceField, Grid, ModelError, OperatorSpec


class ConfigError(ValueError):
    pass


_NUM = {"type": "number"}
_TERM = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}
_TERMS = {"type": "array", "items": _TERM}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


SCHEMA = _obj(
    {
        "operator": _obj(
            {
                "kind": {"enum": ["tv_only", "tv_plus_linear", "tv_plus_regular"]},
                "breaks": {"type": "array", "items": _NUM},
                "coeffs": {"type": "array", "items": {"type": "array", "items": _NUM}},
            },
            ["kind"],
        ),
        "force": _obj(
            {
                "base": _TERMS,
                "ramp": _TERMS,
                "time_law": {"enum": ["constant", "clipped_ramp"]},
                "cap": _NUM,
                "sign": {"enum": [1, -1]},
                "sampling": {"enum": ["average", "midpoint"]},
            }
        ),
        "grid": _obj({"n_cells": {"type": "integer", "minimum": 4}}),
        "time": _obj({"tau": {"type": "number", "exclusiveMinimum": 0}, "T": {"type": "number", "exclusiveMinimum": 0}}),
        "tolerances": _obj(
            {
                "step": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "steady": {"type": "number", "exclusiveMinimum": 0},
                "eps_stag": {"type": "number", "exclusiveMinimum": 0},
            }
        ),
        "snapshot_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "initial": _obj(
            {
                "kind": {"enum": ["zero", "tent", "steady_constant", "file"]},
                "height": _NUM,
                "A": {"type": "number", "minimum": 0},
                "path": {"type": "string"},
            },
            ["kind"],
        ),
        "target": {"type": "string"},
        "steady": _obj(
            {
                "kind": {"enum": ["numeric", "constant", "three_facet"]},
                "A": {"type": "number", "minimum": 0},
                "alpha": _NUM,
            }
        ),
        "analyze": _obj(
            {
                "profile": {"type": "string"},
                "slope_tol": {"type": "number", "exclusiveMinimum": 0},
                "min_length": {"type": "number", "exclusiveMinimum": 0},
            }
        ),
        "experiment": _obj(
            {
                "alpha": _NUM,
                "alpha_list": {"type": "array", "items": _NUM, "minItems": 1},
                "refine_steps": {"type": "integer", "minimum": 0},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "cap": {"type": "number", "minimum": 0},
                "A": {"type": "number", "exclusiveMinimum": 0},
                "perturbation": _TERMS,
            }
        ),
    }
)

DEFAULTS = {"grid": {"n_cells": 1024}, "time": {"tau": 1e-3}}


def _where(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def validate(cfg: dict) -> dict:
    """Validate a config mapping; unknown keys are rejected with their location."""
    if cfg is None:
        cfg = {}
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a mapping")
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"config error at {_where(e)}: {e.message}")
    return cfg


def load(path: str | Path | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from exc
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {p} is not valid YAML: {exc}") from exc
    return validate(cfg)


def merged(cfg: dict, overrides: dict) -> dict:
    """Defaults, then the config, then dotted-key overrides such as ``time.tau``."""
    out = copy.deepcopy(DEFAULTS)
    for section, val in cfg.items():
        if isinstance(val, dict):
            out.setdefault(section, {}).update(copy.deepcopy(val))
        else:
            out[section] = copy.deepcopy(val)
    for key, val in overrides.items():
        if val is None:
            continue
        section, _, name = key.partition(".")
        out.setdefault(section, {})[name] = val
    return validate(out)


def build_operator(cfg: dict) -> OperatorSpec:
    spec = cfg.get("operator", {"kind": "tv_plus_linear"})
    try:
        if spec["kind"] == "tv_only":
            return OperatorSpec.tv()
        if spec["kind"] == "tv_plus_linear":
            return OperatorSpec.linear()
        if "breaks" not in spec or "coeffs" not in spec:
            raise ConfigError("config error at operator: tv_plus_regular needs breaks and coeffs")
        return OperatorSpec.regular(spec["breaks"], spec["coeffs"])
    except ModelError as exc:
        raise ConfigError(f"config error at operator: {exc}") from exc


def build_force(cfg: dict) -> ForceField:
    spec = cfg.get("force")
    if spec is None:
        raise ConfigError("config error at force: section required")
    try:
        return ForceField(
            tuple(tuple(t) for t in spec.get("base", ())),
            tuple(tuple(t) for t in spec.get("ramp", ())),
            spec.get("time_law", "constant"),
            spec.get("cap", 0.0),
            spec.get("sign", 1),
        )
    except ModelError as exc:
        raise ConfigError(f"config error at {exc}") from exc


def build_grid(cfg: dict) -> Grid:
    return Grid(cfg["grid"]["n_cells"])


def sampling(cfg: dict) -> str:
    return cfg.get("force", {}).get("sampling", "average")
