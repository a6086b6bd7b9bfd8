"""Run configuration: defaults per experiment, JSON-schema validation, overrides.

A run configuration is a nested JSON object. Every section is optional in
user input; missing values come from the experiment's defaults and the chosen
preset. Unknown keys are rejected at every level.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .score import FitConfig

__all__ = [
    "ConfigError",
    "EXPERIMENTS",
    "SCHEMA",
    "default_config",
    "resolve_config",
    "validate_config",
    "load_config_file",
    "parse_override",
    "fit_config_from",
]

EXPERIMENTS = ("dw1d", "dwNd", "gl", "images", "perturb")


class ConfigError(ValueError):
    pass


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_INT1 = {"type": "integer", "minimum": 1}
_INT0 = {"type": "integer", "minimum": 0}
_OPT_INT1 = {"type": ["integer", "null"], "minimum": 1}
_OPT_STR = {"type": ["string", "null"]}

SCHEMA = _obj({
    "experiment": {"enum": list(EXPERIMENTS)},
    "preset": {"enum": ["desk", "paper"]},
    "base": _obj({
        "family": {"enum": ["hermite", "fourier", "meanfield"]},
        "alpha": _POS,
        "L": _POS,
        "n_m": {"type": "integer", "minimum": 2, "multipleOf": 2},
        "grid_size": {"type": "integer", "minimum": 101},
    }),
    "basis": _obj({
        "n": _INT1,
        "d_b": _INT0,
        "include_singles": {"type": "boolean"},
        "include_constant": {"type": "boolean"},
    }),
    "beta": _POS,
    "time": _obj({"T": _POS, "dt": _POS}),
    "solver": _obj({
        "method": {"enum": ["thresholded", "sketched", "ridge"]},
        "tau": _NONNEG,
        "rank": _OPT_INT1,
        "sketch": _OPT_INT1,
        "rank_candidates": {"type": "array", "items": _INT1},
        "mu": _NONNEG,
    }),
    "sampling": _obj({
        "N_fit": _INT1,
        "N_gen": _INT1,
        "N_eval": _INT1,
        "repeats": _INT1,
        "base_sampler": {"enum": ["mh", "icdf"]},
        "mh": _obj({
            "burn_in": _INT0,
            "thin": _INT1,
            "proposal_sigma": {"type": ["number", "null"], "exclusiveMinimum": 0},
            "chains": _OPT_INT1,
        }),
        "mala_steps": _INT1,
        "mala_step": _POS,
    }),
    "seeds": _obj({"data": _INT0, "fit": _INT0, "generate": _INT0, "eval": _INT0}),
    "target": _obj({
        "d": _INT1,
        "beta_dw": _POS,
        "lam": _POS,
        "h": _POS,
        "beta_gl": _POS,
    }),
    "evaluation": _obj({
        "times": {"type": "array", "items": _NONNEG},
        "fp_spacing": _POS,
        "kde_grid": {"type": "integer", "minimum": 16},
    }),
    "images": _obj({
        "idx": _OPT_STR,
        "labels": _OPT_STR,
        "digits": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 9}},
        "per_digit": _OPT_INT1,
        "pca_r": _INT1,
        "synthetic_per_digit": _INT1,
    }),
    "perturb": _obj({
        "deltas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                   "minItems": 2},
        "Ms": {"type": "array", "items": _INT1, "minItems": 1},
        "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "M_fixture": _INT1,
        "family": {"enum": ["fourier", "hermite"]},
    }),
    "sweep": {"type": "object", "additionalProperties": {"type": "array", "minItems": 1}},
    "paths": _obj({"out": {"type": "string"}}),
}, required=["experiment"])


_COMMON = {
    "base": {"family": "hermite", "alpha": 1.0, "L": 3.0, "n_m": 6, "grid_size": 4001},
    "basis": {"n": 10, "d_b": 0, "include_singles": True, "include_constant": True},
    "beta": 1.0,
    "time": {"T": 2.0, "dt": 0.002},
    "solver": {"method": "thresholded", "tau": 1e-8, "rank": None, "sketch": None,
               "rank_candidates": [], "mu": 1e-8},
    "sampling": {"N_fit": 40000, "N_gen": 40000, "N_eval": 100000, "repeats": 1,
                 "base_sampler": "mh",
                 "mh": {"burn_in": 1000, "thin": 10, "proposal_sigma": None, "chains": None},
                 "mala_steps": 3000, "mala_step": 0.3},
    "seeds": {"data": 0, "fit": 0, "generate": 1, "eval": 12345},
    "target": {"d": 1, "beta_dw": 2.0, "lam": 0.05, "h": 0.1, "beta_gl": 0.125},
    "evaluation": {"times": [0.0], "fp_spacing": 0.005, "kde_grid": 512},
    "images": {"idx": None, "labels": None, "digits": list(range(10)), "per_digit": 5000,
               "pca_r": 10, "synthetic_per_digit": 200},
    "perturb": {"deltas": [0.025, 0.05, 0.1], "Ms": [4, 8], "gamma": 0.5, "M_fixture": 40,
                "family": "fourier"},
    "sweep": {},
    "paths": {"out": "runs"},
}

# experiment -> preset -> overrides of _COMMON
_DEFAULTS = {
    "dw1d": {
        "paper": {"basis": {"n": 9}, "sampling": {"repeats": 5},
                  "evaluation": {"times": [0.0, 0.02, 0.1, 0.5, 2.0]}},
        "desk": {},
    },
    "dwNd": {
        "paper": {"base": {"family": "meanfield"}, "basis": {"n": 10, "d_b": 2},
                  "target": {"d": 32, "beta_dw": 8.0}, "solver": {"method": "sketched"}},
        "desk": {"target": {"d": 8}, "solver": {"method": "thresholded"}},
    },
    "gl": {
        "paper": {"base": {"family": "meanfield"}, "basis": {"n": 10, "d_b": 4},
                  "target": {"d": 32, "lam": 0.05},
                  "solver": {"method": "sketched"},
                  "sampling": {"N_fit": 80000, "N_gen": 80000}},
        # pair terms overfit at N = 40000; the score itself is a sum of singles
        "desk": {"target": {"d": 16}, "basis": {"d_b": 0}, "time": {"dt": 0.01},
                 "sampling": {"N_fit": 40000, "N_gen": 40000, "mala_steps": 1500}},
    },
    "images": {
        "paper": {"base": {"family": "fourier", "L": 4.0}, "beta": 0.5, "basis": {"n": 10, "d_b": 2},
                  "time": {"T": 3.0, "dt": 0.002}, "solver": {"method": "sketched"},
                  "sampling": {"N_gen": 16}},
        "desk": {"time": {"dt": 0.01}, "basis": {"n": 6}, "solver": {"method": "thresholded"}},
    },
    "perturb": {
        "paper": {"base": {"family": "fourier", "L": 3.0}, "time": {"T": 6.0, "dt": 0.02}},
        "desk": {},
    },
}


def _merge(dst: dict, src: dict) -> dict:
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict) and k != "sweep":
            _merge(dst[k], v)
        else:
            dst[k] = copy.deepcopy(v)
    return dst


def default_config(experiment: str, preset: str = "desk") -> dict:
    """Fully populated configuration for ``experiment``.

    The ``paper`` preset carries the published protocol; ``desk`` applies
    reductions on top of it so a run fits a single-core budget.
    """
    if experiment not in _DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    if preset not in ("desk", "paper"):
        raise ConfigError(f"unknown preset {preset!r}")
    cfg = copy.deepcopy(_COMMON)
    _merge(cfg, _DEFAULTS[experiment]["paper"])
    if preset == "desk":
        _merge(cfg, _DEFAULTS[experiment]["desk"])
    cfg["experiment"] = experiment
    cfg["preset"] = preset
    return cfg


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config: {where}: {exc.message}") from None
    for key in cfg.get("sweep", {}):
        _lookup(cfg, key)
    if cfg["time"]["T"] < cfg["time"]["dt"]:
        raise ConfigError("config: time: T must be at least dt")
    return cfg


def _lookup(cfg: dict, dotted: str):
    node = cfg
    parts = dotted.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"config: no section {dotted!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"config: unknown key {dotted!r}")
    return node, parts[-1]


def set_path(cfg: dict, dotted: str, value) -> None:
    node, key = _lookup(cfg, dotted)
    node[key] = value


def parse_override(text: str) -> tuple[str, object]:
    """``"basis.n=9"`` -> ``("basis.n", 9)``; values are JSON, else plain strings."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key.path=value")
    key, raw = text.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.strip(), val


def resolve_config(experiment: str | None = None, user: dict | None = None, overrides=(),
                   preset: str | None = None) -> dict:
    """Defaults, then the user document, then ``key.path=value`` overrides; validated.

    Raises
    ------
    ConfigError
        On schema violations, unknown keys or conflicting experiment ids.
    """
    user = copy.deepcopy(user or {})
    exp = experiment or user.get("experiment")
    if exp is None:
        raise ConfigError("config: no experiment given")
    if experiment and user.get("experiment", experiment) != experiment:
        raise ConfigError(f"config: file is for {user['experiment']!r}, not {experiment!r}")
    preset = preset or user.get("preset", "desk")
    cfg = default_config(exp, preset)
    # validate the user document alone first so unknown keys are reported as such
    validate_config(_merge(copy.deepcopy(cfg), user))
    _merge(cfg, user)
    for item in overrides:
        key, val = parse_override(item) if isinstance(item, str) else item
        set_path(cfg, key, val)
    return validate_config(cfg)


def load_config_file(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON: {exc}") from None


def fit_config_from(cfg: dict, seed_offset: int = 0) -> FitConfig:
    """The score-fit part of a run configuration."""
    b, s = cfg["base"], cfg["solver"]
    return FitConfig(
        family=b["family"], n=cfg["basis"]["n"], d_b=cfg["basis"]["d_b"],
        include_singles=cfg["basis"]["include_singles"],
        include_constant=cfg["basis"]["include_constant"], beta=cfg["beta"], alpha=b["alpha"],
        L=b["L"], n_m=b["n_m"], grid_size=b["grid_size"], T=cfg["time"]["T"], dt=cfg["time"]["dt"],
        method=s["method"], tau=s["tau"], rank=s["rank"], sketch=s["sketch"],
        rank_candidates=tuple(s["rank_candidates"]), mu=s["mu"], seed=cfg["seeds"]["fit"] + seed_offset,
    )
