"""Experiment configuration: YAML files checked against a JSON schema.

Every section is optional and falls back to the defaults below; unknown keys
are rejected. Environment variables LATTICE_SHE_SEED, LATTICE_SHE_REPLICAS,
LATTICE_SHE_THREADS and LATTICE_SHE_OUTDIR override the matching top-level
entries.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

import jsonschema
import yaml

from .errors import PreconditionError

SCHEMA_VERSION = 1

_number = {"type": "number"}
_int = {"type": "integer"}
_pos_int = {"type": "integer", "minimum": 1}
_num_list = {"type": "array", "items": _number, "minItems": 1}
_int_list = {"type": "array", "items": _pos_int, "minItems": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


KERNEL_SCHEMA = _obj({
    "family": {"enum": ["simple", "lazy", "zeta", "biased", "point-mass", "table"]},
    "p_stay": _number,
    "step": _int,
    "alpha": _number,
    "radius": _pos_int,
    "nu": _number,
    "a": _number,
    "name": {"type": "string"},
    "pmf": {"type": "object", "additionalProperties": _number},
}, required=("family",))

NOISE_SCHEMA = _obj({
    "family": {"enum": ["gaussian", "rademacher", "uniform", "centered-exponential", "two-point"]},
    "p": _number,
    "kappa": _number,
}, required=("family",))

NONLIN_SCHEMA = _obj({
    "name": {"enum": ["zero", "one", "identity", "scaled-identity", "clipped-linear", "bounded-sine"]},
    "beta": _number,
    "cap": _number,
}, required=("name",))

INITIAL_SCHEMA = _obj({
    "variant": {"enum": ["constant", "dirac", "random-increments"]},
    "value": _number,
    "eta": NOISE_SCHEMA,
    "lam": _number,
})

SCHEMA = _obj({
    "seed": {"type": "integer", "minimum": 0},
    "replicas": _pos_int,
    "threads": _pos_int,
    "output_dir": {"type": "string"},
    "kernel": KERNEL_SCHEMA,
    "noise": NOISE_SCHEMA,
    "simulate": _obj({
        "sigma": NONLIN_SCHEMA,
        "drift": {"oneOf": [NONLIN_SCHEMA, {"type": "null"}]},
        "n": _pos_int,
        "T": _number,
        "initial": INITIAL_SCHEMA,
        "window": {"oneOf": [{"type": "array", "items": _int, "minItems": 2, "maxItems": 2}, {"type": "null"}]},
        "times": _num_list,
        "xs": _num_list,
    }),
    "polymer": _obj({
        "beta": _number,
        "ns": _int_list,
        "endpoint_environments": {"type": "integer", "minimum": 0},
    }),
    "llt_check": _obj({"ns": _int_list, "t": _number, "b": _number, "c": _number}),
    "coupling_check": _obj({
        "theta": _number,
        "gamma": _number,
        "ns": _int_list,
        "order": _number,
        "samples": _pos_int,
    }),
    "moments": _obj({"ns": _int_list, "betas": _num_list, "t": _number}),
    "acceptance": _obj({"only": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 12}}}),
})

DEFAULTS = {
    "seed": 0,
    "replicas": 1000,
    "threads": 1,
    "output_dir": "out",
    "kernel": {"family": "lazy"},
    "noise": {"family": "gaussian"},
    "simulate": {
        "sigma": {"name": "one"},
        "drift": None,
        "n": 256,
        "T": 1.0,
        "initial": {"variant": "constant", "value": 0.0},
        "window": None,
        "times": [1.0],
        "xs": [0.0],
    },
    "polymer": {"beta": 1.0, "ns": [256], "endpoint_environments": 1},
    "llt_check": {"ns": [256, 512, 1024, 2048, 4096], "t": 1.0, "b": 1.0, "c": 1.0},
    "coupling_check": {"theta": 0.4, "gamma": 0.08, "ns": [256, 512, 1024, 2048, 4096], "order": 2.0,
                       "samples": 1_000_000},
    "moments": {"ns": [256, 512, 1024, 2048], "betas": [0.5, 1.0], "t": 1.0},
    "acceptance": {"only": list(range(1, 13))},
}

ENV_OVERRIDES = {
    "LATTICE_SHE_SEED": ("seed", int),
    "LATTICE_SHE_REPLICAS": ("replicas", int),
    "LATTICE_SHE_THREADS": ("threads", int),
    "LATTICE_SHE_OUTDIR": ("output_dir", str),
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key not in ("kernel", "noise"):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _validate(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise PreconditionError(f"invalid configuration at {where}: {exc.message}") from None


def resolve(raw: dict | None, environ=None) -> dict:
    """Validate a raw mapping, fill defaults and apply environment overrides."""
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise PreconditionError("configuration must be a mapping")
    _validate(raw)
    cfg = _merge(DEFAULTS, raw)
    environ = os.environ if environ is None else environ
    for var, (key, cast) in ENV_OVERRIDES.items():
        if var in environ:
            try:
                cfg[key] = cast(environ[var])
            except ValueError:
                raise PreconditionError(f"{var} must be {cast.__name__}") from None
    _validate(cfg)
    return cfg


def load(path: str | Path | None, environ=None) -> dict:
    if path is None:
        return resolve({}, environ)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise PreconditionError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise PreconditionError(f"malformed YAML in {path}: {exc}") from None
    return resolve(raw, environ)


def content_hash(cfg: dict) -> str:
    """sha256 of the canonical JSON form of the resolved configuration."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
