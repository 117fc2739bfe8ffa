"""
Minimal dense-tensor substrate with reverse-mode differentiation.
"""
from .tensor import DiffTensor, Tape, TapeEntry, as_tensor, backward, no_grad
from .ops import (
    add, sub, mul, scale, neg, exp, log, relu, absolute, power, clip, smooth_l1,
    sigmoid_t, log_sigmoid_t, softmax_t, log_softmax_t,
    reduce, sum_, mean, max_, reshape, transpose, index, take, concat, stack,
)
from .layers import linear_map, matmul, conv2d
from .sampling import affine_grid_sample, adaptive_avg_pool, resize_bilinear, crop_and_resize
from .gradcheck import grad_check, grad_check_inputs

__all__ = [
    "DiffTensor", "Tape", "TapeEntry", "as_tensor", "backward", "no_grad",
    "add", "sub", "mul", "scale", "neg", "exp", "log", "relu", "absolute", "power", "clip", "smooth_l1",
    "sigmoid_t", "log_sigmoid_t", "softmax_t", "log_softmax_t",
    "reduce", "sum_", "mean", "max_", "reshape", "transpose", "index", "take", "concat", "stack",
    "linear_map", "matmul", "conv2d",
    "affine_grid_sample", "adaptive_avg_pool", "resize_bilinear", "crop_and_resize",
    "grad_check", "grad_check_inputs",
]
