"""Probabilistic multi-farm wind power forecasting with dynamic hypergraphs.

The package is a small numpy stack: a reverse-mode autodiff core
(:mod:`stdhl.numerics`), hypergraph and temporal convolutions, an
encoder-decoder forecaster with its baselines, data handling for the GEFCom
CSV schema, metrics, training, and a command-line interface.
"""

from .data import DataError, load_csv, make_windows, prepare, synth_dataset
from .encdec import DEFAULT_LEVELS, ForecastQuantiles
from .metrics import EvaluationReport, crps, evaluation_report, mae, rmse
from .model import ModelConfig, StdhlModel, build_forecaster, load_checkpoint, save_checkpoint
from .training import NumericalError, TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_LEVELS",
    "DataError",
    "EvaluationReport",
    "ForecastQuantiles",
    "ModelConfig",
    "NumericalError",
    "StdhlModel",
    "TrainConfig",
    "build_forecaster",
    "crps",
    "evaluate",
    "evaluation_report",
    "load_checkpoint",
    "load_csv",
    "mae",
    "make_windows",
    "prepare",
    "rmse",
    "save_checkpoint",
    "synth_dataset",
    "train",
]
