"""Pipeline configuration: JSON schema, defaults and digest."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema

from .errors import ConfigError

_num = {"type": "number"}
_int = {"type": "integer"}
_pos_int = {"type": "integer", "minimum": 1}
_str_or_null = {"type": ["string", "null"]}


def _section(props):
    return {"type": "object", "additionalProperties": False, "properties": props}


SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "city": {"type": "string"},
        "simulate": _section({
            "n_years": _pos_int,
            "storm_rate": {"type": "number", "minimum": 0},
            "storm_shape": {"type": "number", "exclusiveMinimum": 0},
            "storm_scale": {"type": "number", "exclusiveMinimum": 0},
            "baseline": _num,
            "precip_sens": _num,
            "lag1_weight": _num,
            "lag2_weight": _num,
            "max_daily_weight": _num,
            "noise_scale": {"type": "number", "minimum": 0},
            "n_scenarios": _pos_int,
            "theta_true": {"type": "number", "minimum": 1},
            "trend_multipliers": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            "scenario_ids": {"type": "array", "items": {"type": "string"}},
            "control_start": {"type": "string", "format": "date"},
            "scenario_start": {"type": "string", "format": "date"},
        }),
        "ingest": _section({
            "daily_path": _str_or_null,
            "scenarios_path": _str_or_null,
            "week_origin": _str_or_null,
            "aggregation": {"enum": ["mean", "sum"]},
            "scenario_ids": {"type": ["array", "null"], "items": {"type": "string"}},
        }),
        "network": _section({
            "model_id": {"oneOf": [{"enum": [1, 2, 3, 4]}, {"const": "auto"}]},
            "columns": {"type": ["array", "null"], "items": {"type": "string"}, "minItems": 1},
            "hidden_layers": {"type": "array", "items": _pos_int, "minItems": 1},
            "dropout_rate": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "l2_lambda": {"type": "number", "minimum": 0},
            "learning_rate": {"type": "number", "exclusiveMinimum": 0},
            "epochs": {"type": "integer", "minimum": 0},
            "batch_size": _pos_int,
            "optimizer": {"enum": ["adam", "sgd"]},
        }),
        "selection": _section({
            "fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "n_seeds": _pos_int,
            "epochs": {"type": ["integer", "null"], "minimum": 0},
        }),
        "marginals": _section({
            "families": {"type": "array", "minItems": 1, "uniqueItems": True,
                         "items": {"enum": ["poisson", "nb1", "nb2", "zip", "lognormal"]}},
            "exposure": {"type": "number", "exclusiveMinimum": 0},
        }),
        "copula": _section({
            "estimator": {"enum": ["tau-inversion", "pairwise-composite-ML"]},
            "bootstrap_reps": {"type": "integer", "minimum": 0},
        }),
        "risk": _section({
            "z_grid": {"type": ["array", "null"], "items": {"type": "number", "exclusiveMinimum": 0}},
            "z_points": {"type": "integer", "minimum": 2},
            "z_lo_pct": {"type": "number", "minimum": 0, "maximum": 100},
            "z_hi_pct": {"type": "number", "minimum": 0, "maximum": 100},
            "mc_draws": {"type": "integer", "minimum": 0},
            "compare_with": _str_or_null,
        }),
        "output": _section({"dir": {"type": "string"}}),
    },
}

DEFAULTS = {
    "seed": 0,
    "city": "A",
    "simulate": {},
    "ingest": {"daily_path": None, "scenarios_path": None, "week_origin": None,
               "aggregation": "mean", "scenario_ids": None},
    "network": {"model_id": 3, "columns": None, "hidden_layers": [64, 64, 64], "dropout_rate": 0.2,
                "l2_lambda": 1e-4, "learning_rate": 1e-3, "epochs": 200, "batch_size": 32,
                "optimizer": "adam"},
    "selection": {"fraction": 0.8, "n_seeds": 1, "epochs": None},
    "marginals": {"families": ["lognormal"], "exposure": 1.0},
    "copula": {"estimator": "tau-inversion", "bootstrap_reps": 500},
    "risk": {"z_grid": None, "z_points": 50, "z_lo_pct": 50.0, "z_hi_pct": 99.9,
             "mc_draws": 100_000, "compare_with": None},
    "output": {"dir": "runs"},
}


def json_pointer(path):
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in path)


def validate(doc):
    validator = jsonschema.Draft202012Validator(SCHEMA, format_checker=jsonschema.FormatChecker())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"config error at {json_pointer(e.absolute_path)}: {e.message}")
    risk = doc.get("risk", {})
    if risk.get("z_lo_pct", 50.0) >= risk.get("z_hi_pct", 99.9):
        raise ConfigError("config error at /risk/z_lo_pct: must be below z_hi_pct")
    fams = doc.get("marginals", {}).get("families")
    if fams and "lognormal" in fams and len(fams) > 1:
        # AIC of a density and of a pmf are not comparable
        raise ConfigError("config error at /marginals/families: lognormal cannot be mixed with count families")


def with_defaults(doc):
    out = copy.deepcopy(DEFAULTS)
    for key, value in doc.items():
        if isinstance(value, dict):
            out[key].update(copy.deepcopy(value))
        else:
            out[key] = copy.deepcopy(value)
    return out


def load(path, seed=None, scenarios=None):
    """Read, validate and complete a config file.

    Relative paths inside the document are resolved against the config
    file's directory. ``seed`` and ``scenarios`` are command-line overrides.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config error at /: expected an object")
    validate(doc)
    cfg = with_defaults(doc)
    if seed is not None:
        cfg["seed"] = int(seed)
    if scenarios is not None:
        cfg["ingest"]["scenarios_path"] = str(Path(scenarios).resolve())
    base = path.resolve().parent
    for section, key in (("ingest", "daily_path"), ("ingest", "scenarios_path"), ("risk", "compare_with")):
        value = cfg[section][key]
        if value is not None:
            cfg[section][key] = str((base / value).resolve())
    validate(cfg)
    return cfg


def digest(cfg):
    """SHA-256 of the canonical config, ignoring the output location."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
