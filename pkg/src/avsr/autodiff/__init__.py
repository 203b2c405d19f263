from .tensor import (DTYPE, RandomNormal, Tape, Tensor, as_tensor, backward, grad_enabled,
                     no_grad, tensor_new, zero_grads)
from .ops import (activation, add, add_bias, concat, cross_entropy, exp, flip, getitem, log,
                  log_softmax, matmul, mean, mul, relu, reshape, scale_timesteps, segment_bounds,
                  segment_mean, sigmoid, softmax, stack, sub, tanh, transpose)
from .ops import sum as tsum
from .conv import batchnorm, conv, conv1d, conv2d, conv3d, output_extent
from .gradcheck import GradCheckReport, grad_check, grad_check_sampled
from .ops import record_kinks

__all__ = [
    "DTYPE", "RandomNormal", "Tape", "Tensor", "as_tensor", "backward", "grad_enabled", "no_grad",
    "tensor_new", "zero_grads", "activation", "add", "add_bias", "concat", "cross_entropy", "exp",
    "flip", "getitem", "log", "log_softmax", "matmul", "mean", "mul", "relu", "reshape",
    "scale_timesteps", "segment_bounds", "segment_mean", "sigmoid", "softmax", "stack", "sub",
    "tanh", "transpose", "tsum", "batchnorm", "conv", "conv1d", "conv2d", "conv3d",
    "output_extent", "GradCheckReport", "grad_check", "grad_check_sampled", "record_kinks",
]
