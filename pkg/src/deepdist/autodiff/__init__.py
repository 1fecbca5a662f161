"""Minimal reverse-mode autodiff with the layers needed by the forecasters."""

from deepdist.autodiff.layers import conv1d, dense, dropout, flatten, lstm_layer, maxpool1d
from deepdist.autodiff.optim import AdamState, adam_step, clip_global_norm, l2_penalty
from deepdist.autodiff.tensor import (
    Graph,
    Tensor,
    add,
    bias_add,
    concat,
    div,
    exp,
    log,
    make_node,
    matmul,
    mul,
    relu,
    reduce_mean,
    reduce_sum,
    reshape,
    sigmoid,
    slice_,
    softplus,
    sub,
    tanh,
)

__all__ = [
    "AdamState", "Graph", "Tensor", "adam_step", "add", "bias_add", "clip_global_norm",
    "concat", "conv1d", "dense", "div", "dropout", "exp", "flatten", "l2_penalty", "log",
    "lstm_layer", "make_node", "matmul", "maxpool1d", "mul", "reduce_mean", "reduce_sum",
    "relu", "reshape", "sigmoid", "slice_", "softplus", "sub", "tanh",
]
