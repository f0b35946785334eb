"""Conditional mixture models for mixed data with fixed design variables.

Thin wrappers over the C++ core. Nested inputs and outputs are plain dicts;
data matrices are NumPy arrays with NaN for missing cells.
"""

import json
from os import PathLike, fspath

import numpy as np

from . import _core
from ._core import CmmError, empirical_mi, mi_from_table

__all__ = [
    "CmmError",
    "cli",
    "default_run_config",
    "default_study",
    "empirical_mi",
    "fit",
    "fusion_study",
    "gower_distances",
    "mi_from_table",
    "select_features",
]


def cli(*args):
    """Run the command-line tool in-process. Returns (exit code, stdout, stderr)."""
    return _core.cli([fspath(a) if isinstance(a, PathLike) else str(a) for a in args])


def default_run_config():
    return json.loads(_core.default_run_config())


def default_study():
    return json.loads(_core.default_study())


def fit(config, base="."):
    """Run the chains of a run configuration (dict). Relative paths resolve against `base`."""
    out = _core.fit(json.dumps(config), fspath(base))
    out["alpha"] = [np.asarray(a) for a in out["alpha"]]
    out["active"] = [np.asarray(a) for a in out["active"]]
    return out


def fusion_study(study=None, **overrides):
    """Run the fusion simulation study; `study` defaults to default_study()."""
    cfg = dict(study or {})
    cfg.update(overrides)
    return json.loads(_core.fusion_study(json.dumps(cfg)))


def select_features(values, schema, t1=0.05, t2=0.8, bins=10):
    """Mutual-information report and mRMR selection over the fixed columns."""
    values = np.asarray(values, dtype=float)
    return json.loads(_core.select_features(values, json.dumps(schema), t1, t2, bins))


def gower_distances(values, schema, weights=None):
    """Pairwise Gower distances over the fixed columns of `values`."""
    values = np.asarray(values, dtype=float)
    return _core.gower_distance(values, json.dumps(schema), list(weights or []))
