"""Python bindings for the LGML core library."""

import json

from ._lgml import (
    Error,
    Expr,
    InvalidArgument,
    Mlp,
    ParseError,
    StalledLoopError,
    UnsupportedNodeError,
    check,
    emit_smt,
    train,
    verify,
)
from . import _lgml

__all__ = [
    "Error",
    "Expr",
    "InvalidArgument",
    "Mlp",
    "ParseError",
    "StalledLoopError",
    "UnsupportedNodeError",
    "baseline",
    "check",
    "config",
    "emit_smt",
    "run",
    "train",
    "verify",
]


def _overrides(settings):
    return [f"{key}={json.dumps(value)}" for key, value in settings.items()]


def config(experiment="sine", **settings):
    """Full run configuration as a dict. Nested keys use dots: {"model.hidden": [4, 4]}."""
    return json.loads(_lgml.default_config(experiment, _overrides(settings)))


def run(experiment="sine", settings=None, **kwargs):
    """Run an experiment. Returns (report dict, final Mlp or None)."""
    merged = dict(settings or {}, **kwargs)
    report, model = _lgml.run_experiment(experiment, _overrides(merged))
    return json.loads(report), (Mlp.from_json(model) if model else None)


def baseline(experiment="sine", settings=None, **kwargs):
    """Mean test RMSE per training-set size as a list of (size, rmse)."""
    merged = dict(settings or {}, **kwargs)
    return _lgml.run_baseline(experiment, _overrides(merged))
