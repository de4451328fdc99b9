"""Selective cascades of residual ExtraTrees for regression."""

from .cascade import CascadeConfig, CascadeModel, load, predict, save, train
from .dataset import Dataset, SplitSpec, load_csv, split
from .extratrees import ForestConfig, build_forest, predict_forest
from .vim import compute_vim

__version__ = "0.1.0"

__all__ = [
    "CascadeConfig", "CascadeModel", "Dataset", "ForestConfig", "SplitSpec",
    "build_forest", "compute_vim", "load", "load_csv", "predict", "predict_forest",
    "save", "split", "train",
]
