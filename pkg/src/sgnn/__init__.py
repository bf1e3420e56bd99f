"""Stacked separable graph neural networks trained module by module."""
from .data import Dataset, SbmSpec, generate_sbm, load_dataset, save_dataset
from .errors import ConfigError, ContractError, NumericError, ParseError, SGNNError, ShapeError
from .graph import Propagator, SparseGraph, normalize_gcn, propagate
from .metrics import classification_accuracy, clustering_accuracy, kmeans, nmi
from .module import SeparableModule, forward, init_module, preprocess
from .trainer import StackConfig, TrainTrace, embed, load_stack, predict, save_stack, train_stack

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContractError", "Dataset", "NumericError", "ParseError", "Propagator",
    "SGNNError", "SbmSpec", "SeparableModule", "ShapeError", "SparseGraph", "StackConfig",
    "TrainTrace", "classification_accuracy", "clustering_accuracy", "embed", "forward",
    "generate_sbm", "init_module", "kmeans", "load_dataset", "load_stack", "nmi",
    "normalize_gcn", "predict", "preprocess", "propagate", "save_dataset", "save_stack",
    "train_stack",
]
