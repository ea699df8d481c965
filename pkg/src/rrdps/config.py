"""Versioned scenario configuration shared by all CLI commands."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema

from .channel import ChannelParams
from .optimizer import OptimizeConfig
from .sim import SimConfig

CONFIG_VERSION = 1

DEFAULTS: dict = {
    "version": CONFIG_VERSION,
    "source": {
        "L": 128,
        "case": "i",
        "spread": 0.01,
        "spread0": 0.0,
        "mean_scale": "block",
    },
    "channel": {
        "alpha": 0.2,
        "eta_d": 0.15,
        "p_d": 5e-7,
        "e_sym": 0.05,
        "f_EC": 1.16,
    },
    "optimize": {
        "mu_grid": [1e-4, 1e-1, 200],
        "nu_th_max": 40,
        "epsilon_grid": [1e-15, 1e-3, 13],
        "refine": True,
    },
    "sim": {
        "mu0": 1.0 / 128,
        "mu1": None,
        "n_blocks": 100000,
        "seed": 0,
        "fidelity": "model",
        "distances": [0.0, 25.0, 50.0, 75.0, 100.0],
        "max_pulses": 10**10,
    },
}

_prob = {"type": "number", "minimum": 0, "maximum": 1}
_grid = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}


def _section(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "source": _section({
            "L": {"type": "integer", "minimum": 3, "maximum": 4096},
            "case": {"enum": ["i", "ii", "coherent"]},
            "spread": _prob,
            "spread0": _prob,
            "mean_scale": {"enum": ["block", "pulse"]},
        }),
        "channel": _section({
            "alpha": {"type": "number", "minimum": 0},
            "eta_d": _prob,
            "p_d": _prob,
            "e_sym": {"type": "number", "minimum": 0, "maximum": 0.5},
            "f_EC": {"type": "number", "minimum": 1},
        }),
        "optimize": _section({
            "mu_grid": _grid,
            "nu_th_max": {"type": "integer", "minimum": 0},
            "epsilon_grid": _grid,
            "refine": {"type": "boolean"},
        }),
        "sim": _section({
            "mu0": {"type": "number", "minimum": 0},
            "mu1": {"type": ["number", "null"], "minimum": 0},
            "n_blocks": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
            "fidelity": {"enum": ["model", "pulse"]},
            "distances": {"type": "array", "items": {"type": "number", "minimum": 0}},
            "max_pulses": {"type": "integer", "minimum": 1},
        }),
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def validate(doc: dict) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValueError(f"invalid config at {where}: {exc.message}") from None


def load_scenario(path: str | Path | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then the file at ``path``, then ``overrides``; validated."""
    doc = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            user = json.load(fh)
        validate(user)
        doc = _merge(doc, user)
    if overrides:
        doc = _merge(doc, overrides)
    validate(doc)
    return doc


def config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def channel_params(doc: dict, l: float = 0.0) -> ChannelParams:
    return ChannelParams(l=float(l), **doc["channel"])


def _grid_tuple(g) -> tuple[float, float, int]:
    return (float(g[0]), float(g[1]), int(g[2]))


def optimize_config(doc: dict) -> OptimizeConfig:
    src, opt = doc["source"], doc["optimize"]
    return OptimizeConfig(
        L=src["L"], case=src["case"], spread=src["spread"], spread0=src["spread0"],
        mean_scale=src["mean_scale"], channel=channel_params(doc),
        mu_grid=_grid_tuple(opt["mu_grid"]), nu_th_max=opt["nu_th_max"],
        epsilon_grid=_grid_tuple(opt["epsilon_grid"]), refine=opt["refine"],
    )


def sim_config(doc: dict, l: float) -> SimConfig:
    s = doc["sim"]
    return SimConfig(
        L=doc["source"]["L"], mu0=s["mu0"], mu1=s["mu1"], channel=channel_params(doc, l),
        n_blocks=s["n_blocks"], seed=s["seed"], fidelity=s["fidelity"], max_pulses=s["max_pulses"],
    )
