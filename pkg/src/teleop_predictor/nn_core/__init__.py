"""Minimal float64 differentiable core used by every model in the package."""

from .tensor import (
    DTYPE,
    Tensor,
    add,
    as_tensor,
    concat,
    cumulative_mean,
    getitem,
    matmul,
    mean,
    mul,
    reshape,
    scatter_rows,
    sub,
    sum_,
    take_rows,
    transpose,
)
from .functional import (
    conv1d,
    dense,
    dropout,
    elu,
    layer_norm,
    lstm_layer,
    maxpool1d,
    mse_loss,
    rnn_layer,
    sigmoid,
    softmax_rows,
    tanh,
)
from .module import Module, parameter
from .optim import Adam, Param, adam_step
from .gradcheck import finite_diff_check, relative_error
from .checkpoint import MAGIC, load_checkpoint, save_checkpoint

__all__ = [
    "DTYPE", "Tensor", "add", "as_tensor", "concat", "cumulative_mean", "getitem",
    "matmul", "mean", "mul", "reshape", "scatter_rows", "sub", "sum_", "take_rows",
    "transpose", "conv1d", "dense", "dropout", "elu", "layer_norm", "lstm_layer",
    "maxpool1d", "mse_loss", "rnn_layer", "sigmoid", "softmax_rows", "tanh",
    "Module", "parameter", "Adam", "Param", "adam_step", "finite_diff_check",
    "relative_error", "MAGIC", "load_checkpoint", "save_checkpoint",
]
