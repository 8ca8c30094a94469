"""Minimal dense-tensor library with reverse-mode autodiff."""

from .gradcheck import grad_check, projected
from .ops import (
    add,
    batch_norm,
    conv2d,
    elementwise,
    getitem,
    global_avg_pool,
    linear,
    matmul,
    max_pool2d,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    stack,
    sub,
    sum,
    tanh,
    transpose,
)
from .tensor import (
    ContractError,
    DimensionError,
    NonFiniteError,
    Tensor,
    is_grad_enabled,
    no_grad,
    topological_order,
)

__all__ = [
    "ContractError",
    "DimensionError",
    "NonFiniteError",
    "Tensor",
    "add",
    "batch_norm",
    "conv2d",
    "elementwise",
    "getitem",
    "global_avg_pool",
    "grad_check",
    "is_grad_enabled",
    "linear",
    "matmul",
    "max_pool2d",
    "mean",
    "mul",
    "no_grad",
    "projected",
    "relu",
    "reshape",
    "sigmoid",
    "stack",
    "sub",
    "sum",
    "tanh",
    "topological_order",
    "transpose",
]
