"""From-scratch differentiable primitives and training machinery."""

from .checkpoint import load_params, save_params
from .gradcheck import numerical_gradient, numerical_gradient_sample, relative_error
from .layers import (
    LSTM,
    AdaptiveAvgPool2d,
    BatchNorm2d,
    Conv2d,
    Dropout,
    Layer,
    Linear,
    Parameter,
    ReLU,
    ResidualBlock,
    Sequential,
    Sigmoid,
    build_layer,
    sigmoid,
)
from .loss import PROB_CLAMP, weighted_bce
from .optim import SGD, Adam, Optimizer, make_optimizer

__all__ = [
    "LSTM",
    "AdaptiveAvgPool2d",
    "Adam",
    "BatchNorm2d",
    "Conv2d",
    "Dropout",
    "Layer",
    "Linear",
    "Optimizer",
    "PROB_CLAMP",
    "Parameter",
    "ReLU",
    "ResidualBlock",
    "SGD",
    "Sequential",
    "Sigmoid",
    "build_layer",
    "load_params",
    "make_optimizer",
    "numerical_gradient",
    "numerical_gradient_sample",
    "relative_error",
    "save_params",
    "sigmoid",
    "weighted_bce",
]
