"""Preferentially sampled Gaussian fields observed by moving animals.

Tracks are lists of dicts with keys ``id``, ``t`` (n,), ``xy`` (n, 2) and ``response`` (n,).
Configurations may be given as a dict, a path to a TOML/JSON file, or ``None`` for defaults.
"""

import json
import os

import numpy as np

from ._core import (
    ConfigError,
    DataError,
    NumericalError,
    PrefieldError,
    behaviour_weight,
    lattice_points,
    matern_cov,
    read_tracks,
    write_tracks,
)
from . import _core

__all__ = [
    "ConfigError",
    "DataError",
    "NumericalError",
    "PrefieldError",
    "behaviour_weight",
    "config",
    "config_hash",
    "fit",
    "fit_predict",
    "krige",
    "lattice_points",
    "matern_cov",
    "read_tracks",
    "run_analysis",
    "run_experiment",
    "score",
    "simulate",
    "write_tracks",
]


def _config_json(cfg):
    if cfg is None:
        return _core.canonical_config("{}", True)
    if isinstance(cfg, dict):
        return _core.canonical_config(json.dumps(cfg), True)
    path = os.fspath(cfg)
    with open(path, encoding="utf-8") as f:
        text = f.read()
    return _core.canonical_config(text, path.endswith(".json"))


def config(cfg=None):
    """Fully resolved configuration as a dict."""
    return json.loads(_config_json(cfg))


def config_hash(cfg=None):
    return _core.config_hash(_config_json(cfg), True)


def simulate(cfg=None, seed=1):
    """Returns (field, tracks, reflections); field holds xy, value (mu added), rows, cols."""
    return _core.simulate(_config_json(cfg), seed)


def fit(tracks, cfg=None, region=None):
    """Fits both models; returns (standard_report, preferential_report) as dicts."""
    s, p = _core.fit(tracks, _config_json(cfg), region)
    return json.loads(s), json.loads(p)


def fit_predict(tracks, targets, cfg=None):
    """Fits both models and predicts at targets.

    Returns a dict with ``standard`` and ``preferential`` entries, each holding
    ``mean``, ``variance``, ``valid`` and ``report``.
    """
    s, p, sr, pr = _core.fit_predict(tracks, _config_json(cfg), np.asarray(targets, dtype=float))
    s["report"] = json.loads(sr)
    p["report"] = json.loads(pr)
    return {"standard": s, "preferential": p}


def krige(tracks, targets, mu, tau2, phi, sigma2):
    return _core.krige(tracks, mu, tau2, phi, sigma2, np.asarray(targets, dtype=float))


def score(truth, pred, variance, convention="paper"):
    """RMSPE and LIGN per location, MIGN per replicate; inputs are (replicates, locations)."""
    return _core.score(np.atleast_2d(truth), np.atleast_2d(pred), np.atleast_2d(variance), convention)


def run_experiment(cfg, out_dir, threads=1):
    """Runs the simulation study; returns the manifest path."""
    return _core.run_experiment(_config_json(cfg), out_dir, threads)


def run_analysis(tracks, cfg, out_dir, threads=1):
    return _core.run_analysis(tracks, _config_json(cfg), out_dir, threads)
