"""Grouped convolutional networks for multivariate time-series regression."""

import json as _json

from ._core import (
    ConfigError,
    DataError,
    Dataset,
    Model,
    NumericalError,
    ShapeError,
    brute_force_min_ncut,
    config_hash,
    cut,
    dataset_from_arrays,
    load_checkpoint,
    load_csv,
    make_windows,
    ncut,
    repair_gaps,
    run,
    similarity,
    spectral_cluster,
    srmse,
    sym_eig,
    synthetic,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "Model",
    "NumericalError",
    "ShapeError",
    "brute_force_min_ncut",
    "build_model",
    "config_hash",
    "cut",
    "dataset_from_arrays",
    "load_checkpoint",
    "load_csv",
    "make_windows",
    "ncut",
    "repair_gaps",
    "run",
    "similarity",
    "spectral_cluster",
    "srmse",
    "sym_eig",
    "synthetic",
    "train",
]


def build_model(spec, inputs, window, groups=None, seed=0):
    """Build a model from a config-style ``model`` section (a dict).

    ``groups`` holds 0-based labels and is required for explicit grouping.
    """
    from ._core import _build_model

    return _build_model(_json.dumps(spec or {}), inputs, window, groups, seed)


def train(model, inputs, targets, epochs=200, batch_size=32, learning_rate=1e-3, momentum=0.0,
          validation_fraction=0.1, seed=0):
    """Train a copy of ``model``; returns ``(best_model, history, best_epoch)``."""
    from ._core import _train

    return _train(model, inputs, list(targets), epochs, batch_size, learning_rate, momentum,
                  validation_fraction, seed)
