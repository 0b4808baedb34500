"""Online first-drive prediction with calibrated intervals."""

import json

from . import _core
from ._core import (
    Adwin,
    ConfigError,
    DataError,
    InsufficientHistory,
    KllSketch,
    MissingArtifact,
    hopkins_statistic,
    model_kinds,
    pinball_loss,
    sha256_hex,
    stage_names,
    z_for_confidence,
)

__all__ = [
    "Adwin",
    "ConfigError",
    "DataError",
    "InsufficientHistory",
    "KllSketch",
    "MissingArtifact",
    "Model",
    "checkpoint",
    "hopkins_statistic",
    "load_model",
    "make_model",
    "model_kinds",
    "pinball_loss",
    "run_pipeline",
    "run_stage",
    "sha256_hex",
    "stage_names",
    "validate_config",
    "z_for_confidence",
]

Model = _core.Model


def make_model(kind, num_features, params=None, seed=0, confidence=0.90):
    """Fresh online regressor; `params` uses the same names as the run config."""
    return _core.make_model(kind, json.dumps(params or {}), seed, num_features, confidence)


def checkpoint(model):
    return json.loads(model.checkpoint_json())


def load_model(state):
    return _core.load_model(json.dumps(state))


def validate_config(config):
    _core.validate_config(json.dumps(config))


def run_stage(stage, config, seed=None):
    """Runs one pipeline stage; returns its log text."""
    return _core.run_stage(stage, json.dumps(config), seed)


def run_pipeline(config, seed=None):
    return "".join(run_stage(s, config, seed) for s in stage_names())
