"""Minimal reverse-mode autodiff on numpy arrays."""

from .core import DimensionError, Tensor, as_tensor, backward, is_grad_enabled, no_grad
from .ops import (
    absolute, add, concat, conv2d, correlate2d, correlate2d_adjoint, elementwise,
    index, linear_map, mean_all, mul, pad2d, relu, resample, scale, square, sub,
    sum_all,
)
from .gradcheck import gradcheck, numerical_grad
from .optim import Adam, AdamState, adam_step

__all__ = [
    "Tensor", "DimensionError", "as_tensor", "backward", "no_grad", "is_grad_enabled",
    "absolute", "add", "concat", "conv2d", "correlate2d", "correlate2d_adjoint",
    "elementwise", "index", "linear_map", "mean_all", "mul", "pad2d", "relu",
    "resample", "scale", "square", "sub", "sum_all",
    "Adam", "AdamState", "adam_step", "gradcheck", "numerical_grad",
]
