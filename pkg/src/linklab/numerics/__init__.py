"""Shaped-array math: reverse-mode autodiff, conv ops, Adam, checkpoints."""

from .tensor import (
    Tensor,
    add,
    concat,
    dense,
    div,
    exp,
    index_select,
    log,
    matmul,
    mul,
    relu,
    reshape,
    residual_add,
    scatter_to,
    sqrt,
    square,
    tmean,
    transpose,
    tsum,
)
from .ops import ConvSpec, ConvWeights, bce_with_logits, conv2d
from .optim import Adam
from .checkpoint import FORMAT_VERSION, MAGIC, load_tensors, save_tensors
from .gradcheck import finite_difference_error

__all__ = [
    "Adam",
    "ConvSpec",
    "ConvWeights",
    "FORMAT_VERSION",
    "MAGIC",
    "Tensor",
    "add",
    "bce_with_logits",
    "concat",
    "conv2d",
    "dense",
    "div",
    "exp",
    "finite_difference_error",
    "index_select",
    "load_tensors",
    "log",
    "matmul",
    "mul",
    "relu",
    "reshape",
    "residual_add",
    "save_tensors",
    "scatter_to",
    "sqrt",
    "square",
    "tmean",
    "transpose",
    "tsum",
]
