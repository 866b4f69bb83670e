"""Minimal reverse-mode autodiff: tensors, layers, Adam."""

from padkit.numcore.ops import (
    add,
    columns,
    concat,
    conv2d,
    conv_output_size,
    dense,
    exp,
    flatten,
    log,
    log_softmax,
    mean,
    minimum,
    mul,
    neg,
    relu,
    reshape,
    scale_by,
    softmax,
    square,
    sub,
    sum,
    tanh,
)
from padkit.numcore.optim import Adam, AdamState, adam_step
from padkit.numcore.tensor import (
    ConfigurationError,
    DimensionError,
    NumericError,
    Tensor,
    UsageError,
    backward,
)

__all__ = [
    "Adam",
    "AdamState",
    "ConfigurationError",
    "DimensionError",
    "NumericError",
    "Tensor",
    "UsageError",
    "adam_step",
    "add",
    "columns",
    "backward",
    "concat",
    "conv2d",
    "conv_output_size",
    "dense",
    "exp",
    "flatten",
    "log",
    "log_softmax",
    "mean",
    "minimum",
    "mul",
    "neg",
    "relu",
    "reshape",
    "scale_by",
    "softmax",
    "square",
    "sub",
    "sum",
    "tanh",
]
