"""Run configuration: YAML files layered over built-in defaults."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .economy import MarketModel, function_from_dict
from .errors import ConfigError, DomainError

DEFAULTS: dict = {
    "model": {
        "horizon": 1.0,
        "endowment": {"family": "gaussian_bump", "base": 1.0, "peak": 3.5, "width": 0.4},
        "asset": {"family": "logistic", "loc": 0.0, "scale": 1.0},
        "felicity": {"family": "log", "param": 1.0},
        "quadrature": {"node_count": 128, "truncation_width": 8.0, "absolute_tolerance": 1e-9},
    },
    "model_file": None,
    "equilibrium": {"tol": 1e-9},
    "certify": {
        "example1": {
            "mu": 0.5,
            "t_star_fraction": 0.999,
            "cells": [1, 4, 16, 64],
            "budget": 100000,
            "seeds": [0, 1, 2, 3, 4, 5, 6, 7],
            "diagnostic_cells": 64,
            "mu_sweep": True,
        },
        "example2": {
            "mu": 0.5,
            "asset": {"family": "exponential", "scale": 1.0, "rate": 1.0},
            "max_cells": 16,
            "budget": 100000,
            "seed": 0,
            "partition_leads": [0.5, 0.1, 0.01],
            "t_grid_points": 401,
        },
        "lemmas": {
            "epsilon": 0.05,
            "lemma3_epsilons": [0.1, 0.05, 0.01],
            "asset": {"family": "exponential", "scale": 1.0, "rate": 1.0},
            "t_grid_points": 401,
        },
    },
    "hedge": {
        "Ns": [1, 4, 16, 64, 256],
        "scheme": "uniform",
        "n_paths": 100000,
        "seed": 20240601,
    },
    "output": {"dir": "out", "figures": True},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key '{where}'")
        if isinstance(base[key], dict) and key not in ("endowment", "asset", "felicity"):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            # function specs are replaced whole, since families take different parameters
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path | None) -> dict:
    """Defaults, overridden by the YAML file at ``path`` (and its ``model_file``, if any)."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"configuration file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must contain a mapping at top level")
        cfg = _merge(cfg, data)
        if cfg["model_file"]:
            model_path = (path.parent / cfg["model_file"]).resolve()
            if not model_path.is_file():
                raise ConfigError(f"model file not found: {model_path}")
            model_data = yaml.safe_load(model_path.read_text()) or {}
            cfg["model"] = _merge(DEFAULTS["model"], model_data.get("model", model_data), "model.")
            cfg["model_file"] = str(model_path)
    validate(cfg)
    return cfg


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _positive_int(value, name: str):
    _require(isinstance(value, int) and not isinstance(value, bool) and value >= 1, f"{name} must be a positive integer")


def validate(cfg: dict) -> None:
    """Range checks for every numeric parameter; raises :class:`ConfigError`."""
    e1 = cfg["certify"]["example1"]
    _require(isinstance(e1["mu"], (int, float)) and e1["mu"] > 0, "certify.example1.mu must be positive")
    _require(0 < e1["t_star_fraction"] < 1, "certify.example1.t_star_fraction must lie in (0, 1)")
    _require(bool(e1["cells"]), "certify.example1.cells must be non-empty")
    for c in e1["cells"]:
        _positive_int(c, "certify.example1.cells entries")
    _positive_int(e1["budget"], "certify.example1.budget")
    _positive_int(e1["diagnostic_cells"], "certify.example1.diagnostic_cells")
    _require(bool(e1["seeds"]) and all(isinstance(s, int) and s >= 0 for s in e1["seeds"]),
             "certify.example1.seeds must be non-negative integers")
    e2 = cfg["certify"]["example2"]
    _require(isinstance(e2["mu"], (int, float)) and e2["mu"] > 0, "certify.example2.mu must be positive")
    _positive_int(e2["max_cells"], "certify.example2.max_cells")
    _positive_int(e2["budget"], "certify.example2.budget")
    _require(isinstance(e2["seed"], int) and e2["seed"] >= 0, "certify.example2.seed must be a non-negative integer")
    _require(bool(e2["partition_leads"]) and all(0 < d < 1 for d in e2["partition_leads"]),
             "certify.example2.partition_leads must lie in (0, 1)")
    _require(isinstance(e2["t_grid_points"], int) and e2["t_grid_points"] >= 3, "certify.example2.t_grid_points must be >= 3")
    lem = cfg["certify"]["lemmas"]
    _require(lem["epsilon"] > 0 and all(e > 0 for e in lem["lemma3_epsilons"]), "lemma epsilons must be positive")
    _require(isinstance(lem["t_grid_points"], int) and lem["t_grid_points"] >= 3, "certify.lemmas.t_grid_points must be >= 3")
    h = cfg["hedge"]
    _require(bool(h["Ns"]), "hedge.Ns must be non-empty")
    for n in h["Ns"]:
        _positive_int(n, "hedge.Ns entries")
    _require(all(b > a for a, b in zip(h["Ns"], h["Ns"][1:])), "hedge.Ns must be strictly increasing")
    _require(h["scheme"] in ("uniform", "geometric-near-T"), "hedge.scheme must be 'uniform' or 'geometric-near-T'")
    _positive_int(h["n_paths"], "hedge.n_paths")
    _require(isinstance(h["seed"], int) and h["seed"] >= 0, "hedge.seed must be a non-negative integer")
    _require(cfg["equilibrium"]["tol"] > 0, "equilibrium.tol must be positive")
    for key in ("asset",):
        for section in (e2, lem):
            try:
                function_from_dict(section[key])
            except (DomainError, TypeError, KeyError) as exc:
                raise ConfigError(f"invalid asset specification: {exc}") from None
    build_model(cfg)


def build_model(cfg: dict, asset: dict | None = None) -> MarketModel:
    data = copy.deepcopy(cfg["model"])
    if asset is not None:
        data["asset"] = asset
    try:
        return MarketModel.from_dict(data)
    except (DomainError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid model specification: {exc}") from None


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False, default_flow_style=None)


def run_id(cfg: dict, extra: str = "") -> str:
    """Short content hash of the resolved configuration (output location excluded)."""
    blob = json.dumps({k: v for k, v in cfg.items() if k != "output"}, sort_keys=True) + extra
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
