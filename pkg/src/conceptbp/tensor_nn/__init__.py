from . import autodiff
from .autodiff import NumericOverflowError, ShapeError, Tensor
from .graph import ComputationGraph, MissingBindingError, UnknownTapError, evaluate, gradient
from .layers import (Conv2d, Dense, Flatten, Layer, Model, ReLU, Reshape, Sigmoid,
                     SumPool, activations_at, build_model)
from .serialize import load_model, model_from_bytes, model_to_bytes, save_model
from .training import TrainConfig, TrainingDivergedError, fit_params, train_supervised

__all__ = [
    "autodiff", "NumericOverflowError", "ShapeError", "Tensor", "ComputationGraph",
    "MissingBindingError", "UnknownTapError", "evaluate", "gradient", "Conv2d", "Dense",
    "Flatten", "Layer", "Model", "ReLU", "Reshape", "Sigmoid", "SumPool", "activations_at", "build_model",
    "load_model", "model_from_bytes", "model_to_bytes", "save_model", "TrainConfig",
    "TrainingDivergedError", "fit_params", "train_supervised",
]
