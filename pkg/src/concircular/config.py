"""Experiment configuration: YAML files validated against a JSON schema.

A config names one metric, a list of experiments and optional tolerance
overrides.  All functions (scale u, field components, metric data) are
expression strings in x1..xn (and y1..yn for Minkowski norms).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import yaml

from .errors import ConfigError

KINDS = ("trace_circle", "classify_field", "concircular_check", "conformal_check",
         "curvature_scan", "remark61")

DEFAULT_TOLERANCES = {
    "closed_form": 1e-8,
    "invariants": 1e-7,
    "pde": 1e-8,
    "conformal": 1e-8,
    "concircularity": 1e-8,
    "spray": 1e-9,
    "curvature": 1e-6,
    "two_path": 1e-7,
    "transfer": 1e-5,
    "tangency": 1e-5,
    "deviation": 1e-6,
    "classify": 1e-6,
    "predicate": 1e-9,
}

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_fn = {"anyOf": [{"type": "string"}, {"type": "number"}]}
_fn_vec = {"type": "array", "items": _fn, "minItems": 1}
_fn_mat = {"type": "array", "items": _fn_vec, "minItems": 1}

_samples = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "bases": {"type": "integer", "minimum": 1},
        "per_base": {"type": "integer", "minimum": 1},
        "box": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
    },
}

_circle = {
    "type": "object",
    "additionalProperties": False,
    "required": ["x0", "u", "v", "s_max"],
    "properties": {"x0": _vec, "u": _vec, "v": _vec, "s_max": {"type": "number", "exclusiveMinimum": 0},
                   "step": {"type": "number", "exclusiveMinimum": 0}},
}

_metric = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["euclidean", "riemannian", "minkowski", "randers", "conformal"]},
        "dim": {"type": "integer", "minimum": 1, "maximum": 6},
        "A": _fn_mat, "norm": {"type": "string"}, "alpha": _fn_mat, "beta": _fn_vec,
        "base": {"$ref": "#/$defs/metric"}, "u": _fn,
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"family": {"const": "conformal"}}},
         "then": {"required": ["base", "u"]}, "else": {"required": ["dim"]}},
        {"if": {"properties": {"family": {"const": "riemannian"}}}, "then": {"required": ["A"]}},
        {"if": {"properties": {"family": {"const": "minkowski"}}}, "then": {"required": ["norm"]}},
        {"if": {"properties": {"family": {"const": "randers"}}}, "then": {"required": ["beta"]}},
    ],
}


def _experiment(kind, props, required=()):
    base = {"kind": {"const": kind}, "id": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"}}
    base.update(props)
    return {"type": "object", "additionalProperties": False, "required": ["kind", *required],
            "properties": base}


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"metric": _metric},
    "type": "object",
    "additionalProperties": False,
    "required": ["metric", "experiments"],
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "metric": {"$ref": "#/$defs/metric"},
        "tolerances": {"type": "object", "additionalProperties": False,
                       "properties": {k: {"type": "number", "exclusiveMinimum": 0} for k in DEFAULT_TOLERANCES}},
        "experiments": {
            "type": "array",
            "items": {"oneOf": [
                _experiment("trace_circle", {
                    "x0": _vec, "u": _vec, "v": _vec,
                    "s_max": {"type": "number", "exclusiveMinimum": 0},
                    "step": {"type": "number", "exclusiveMinimum": 0},
                    "steps": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2},
                    "closed_form": {"type": "boolean"},
                    "csv_every": {"type": "integer", "minimum": 1},
                }, ["x0", "u", "v", "s_max"]),
                _experiment("classify_field", {"field": _fn_vec, "samples": _samples}, ["field"]),
                _experiment("concircular_check", {"field": _fn_vec, "samples": _samples,
                                                  "rho": {"type": "string"}}, ["field"]),
                _experiment("conformal_check", {
                    "u": _fn, "samples": _samples, "circle": _circle,
                    "check_every": {"type": "integer", "minimum": 1},
                }, ["u"]),
                _experiment("curvature_scan", {"samples": _samples, "flags": {"type": "integer", "minimum": 1},
                                               "perturbation_u": _fn}),
                _experiment("remark61", {
                    "a": _num, "b": _vec, "c": _num, "samples": _samples,
                    "lines": {"type": "integer", "minimum": 0},
                    "circles": {"type": "integer", "minimum": 0},
                    "flags": {"type": "integer", "minimum": 1},
                }, ["a", "b", "c"]),
            ]},
        },
    },
}


@dataclass
class ExperimentConfig:
    name: str
    metric: dict
    experiments: list
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str | None = None
    source: str | None = None

    def tolerance(self, key, scale=1.0):
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key])) * scale

    def to_dict(self):
        d = {"name": self.name, "seed": self.seed, "metric": copy.deepcopy(self.metric),
             "experiments": copy.deepcopy(self.experiments)}
        if self.tolerances:
            d["tolerances"] = dict(self.tolerances)
        if self.output_dir is not None:
            d["output_dir"] = self.output_dir
        return d


def validate(data):
    """Schema-check a parsed config; raises ConfigError with the offending path."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {_message(e)}")
    ids = [exp.get("id", f"{k:02d}_{exp['kind']}") for k, exp in enumerate(data["experiments"])]
    if len(set(ids)) != len(ids):
        raise ConfigError("experiment ids must be unique")


def _message(err):
    # oneOf failures are unreadable; report the branch matching the kind
    if err.validator == "oneOf" and isinstance(err.instance, dict):
        kind = err.instance.get("kind")
        if kind not in KINDS:
            return f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}"
        for sub in err.context:
            if sub.schema_path and sub.schema_path[0] == KINDS.index(kind):
                return sub.message
    return err.message


def from_dict(data, source=None):
    validate(data)
    exps = []
    for k, exp in enumerate(data["experiments"]):
        exp = copy.deepcopy(exp)
        exp.setdefault("id", f"{k:02d}_{exp['kind']}")
        exps.append(exp)
    return ExperimentConfig(name=data.get("name", Path(source).stem if source else "experiment"),
                            metric=copy.deepcopy(data["metric"]), experiments=exps,
                            tolerances=dict(data.get("tolerances", {})), seed=int(data.get("seed", 0)),
                            output_dir=data.get("output_dir"), source=source)


def load(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_dict(data, str(path))


def bundled_dir():
    return Path(__file__).parent / "configs"


def bundled_configs():
    return sorted(bundled_dir().glob("*.yaml"))
