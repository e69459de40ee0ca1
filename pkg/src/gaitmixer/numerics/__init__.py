"""Dense float64 tensor substrate with reverse-mode differentiation."""
from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .kernels import BACKEND as KERNEL_BACKEND
from .ops import (add, concatenate, cosine_similarity, depthwise_conv1d, gelu, l2_normalize,
                  layer_norm, linear, matmul, mean, mul, pad_time, pointwise_conv, relu, reshape,
                  scale, softmax, sub, take, transpose)
from .padding import PaddingSpec
from .tensor import Graph, Tensor, as_tensor, backward, grad_enabled, no_grad

__all__ = [
    "Graph", "KERNEL_BACKEND", "PaddingSpec", "Tensor", "add", "as_tensor", "backward",
    "concatenate", "cosine_similarity", "depthwise_conv1d", "gelu", "grad_enabled",
    "l2_normalize", "layer_norm", "linear", "load_checkpoint", "matmul", "mean", "mul",
    "no_grad", "ops", "pad_time", "pointwise_conv", "relu", "reshape", "save_checkpoint",
    "scale", "softmax", "sub", "take", "transpose",
]
