"""Dense arrays, reverse-mode gradients, SGD, and parameter checkpoints."""

from .array import Array
from .checkpoint import load_entries, load_params, save_params
from .ops import (
    add,
    add_chanvec,
    add_rowvec,
    batch_norm,
    channel_affine,
    conv2d,
    cross_entropy_mean,
    l2_normalize,
    masked_row_logsumexp,
    matmul,
    mean_all,
    mean_pool_hw,
    relu,
    reshape,
    scale,
    softmax_cross_entropy,
    sub,
    sum_all,
    take_per_row,
    transpose,
)
from .optim import sgd_step
from .params import Param, ParamStore
from .tape import Tape, active_tape, backward, grad_for, record_op

__all__ = [
    "Array",
    "Param",
    "ParamStore",
    "Tape",
    "active_tape",
    "add",
    "add_chanvec",
    "add_rowvec",
    "backward",
    "batch_norm",
    "channel_affine",
    "conv2d",
    "cross_entropy_mean",
    "grad_for",
    "l2_normalize",
    "load_entries",
    "load_params",
    "masked_row_logsumexp",
    "matmul",
    "mean_all",
    "mean_pool_hw",
    "record_op",
    "relu",
    "reshape",
    "scale",
    "save_params",
    "sgd_step",
    "softmax_cross_entropy",
    "sub",
    "sum_all",
    "take_per_row",
    "transpose",
]
