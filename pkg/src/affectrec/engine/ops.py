"""Differentiable operations on :class:`~affectrec.engine.tensor.Tensor`.

Every function takes tensors, computes the forward result with numpy and
registers a closure mapping the output gradient to one gradient per input.
Shapes must agree exactly; the only broadcasting allowed is a Python number
or 0-d tensor against a tensor of any shape.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ContractError, DimensionError, Tensor, as_tensor


def _binary_operands(a, b, op: str) -> tuple[Tensor, Tensor]:
    a_is_t, b_is_t = isinstance(a, Tensor), isinstance(b, Tensor)
    dtype = a.dtype if a_is_t else (b.dtype if b_is_t else None)
    a, b = as_tensor(a, dtype), as_tensor(b, dtype)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")
    return a, b


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


# -- elementwise -------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "add")

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return Tensor.from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "sub")

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return Tensor.from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "mul")

    def backward(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return Tensor.from_op(a.data * b.data, (a, b), backward, "mul")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return Tensor.from_op(x.data * mask, (x,), backward, "relu")


def stable_sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(z.dtype, copy=False)


def sigmoid(x: Tensor) -> Tensor:
    s = stable_sigmoid(x.data)

    def backward(g):
        return (g * s * (1.0 - s),)

    return Tensor.from_op(s, (x,), backward, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - t * t),)

    return Tensor.from_op(t, (x,), backward, "tanh")


ELEMENTWISE = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh, "add": add, "mul": mul, "sub": sub}


def elementwise(op: str, *operands) -> Tensor:
    """Dispatch a pointwise operation by name."""
    try:
        fn = ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(*operands)


# -- reductions and shape ----------------------------------------------------
def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    def backward(g):
        return (np.full(x.shape, g, dtype=x.dtype),)

    return Tensor.from_op(np.asarray(x.data.sum(), dtype=x.dtype), (x,), backward, "sum")


def mean(x: Tensor) -> Tensor:
    n = x.size

    def backward(g):
        return (np.full(x.shape, g / n, dtype=x.dtype),)

    return Tensor.from_op(np.asarray(x.data.mean(), dtype=x.dtype), (x,), backward, "mean")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: {x.shape} -> {shape}: {exc}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return Tensor.from_op(out, (x,), backward, "reshape")


def getitem(x: Tensor, index) -> Tensor:
    """Basic (slice/int) indexing; advanced indexing is not supported."""
    out = x.data[index]

    def backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return Tensor.from_op(np.array(out), (x,), backward, "getitem")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractError("stack needs at least one tensor")
    shape = tensors[0].shape
    for t in tensors:
        if t.shape != shape:
            raise DimensionError(f"stack: shapes {shape} and {t.shape} differ")
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor.from_op(out, tuple(tensors), backward, "stack")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inverse),)

    return Tensor.from_op(x.data.transpose(axes), (x,), backward, "transpose")


# -- linear algebra ----------------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor.from_op(a.data @ b.data, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight + bias`` for ``x`` of shape [N, D] and weight [D, K]."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"linear: input {x.shape} vs weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise DimensionError(f"linear: bias {bias.shape} vs weight {weight.shape}")
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    def backward(g):
        grads = [g @ weight.data.T, x.data.T @ g]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward, "linear")


# -- convolution and pooling -------------------------------------------------
def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """2-D cross-correlation with zero padding, via im2col."""
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-D input and weight, got {x.shape}, {weight.shape}")
    B, C, H, W = x.shape
    F, Cw, kh, kw = weight.shape
    if C != Cw:
        raise DimensionError(f"conv2d: input has {C} channels, weight expects {Cw}")
    if stride < 1 or padding < 0:
        raise ContractError("conv2d: stride must be >= 1 and padding >= 0")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if kh > Hp or kw > Wp:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    if bias is not None and bias.shape != (F,):
        raise DimensionError(f"conv2d: bias {bias.shape} for {F} filters")
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    if kh == 1 and kw == 1:
        cols = xp[:, :, ::stride, ::stride].transpose(0, 2, 3, 1).reshape(B * Ho * Wo, C)
    else:
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * kh * kw)
    wmat = weight.data.reshape(F, -1)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(B, Ho, Wo, F).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, F)
        dw = (g2.T @ cols).reshape(weight.shape)
        dcols = (g2 @ wmat).reshape(B, Ho, Wo, C, kh, kw)
        dxp = np.zeros((B, C, Hp, Wp), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += dcols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        dx = dxp[:, :, padding : padding + H, padding : padding + W] if padding else dxp
        grads = [dx, dw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(np.ascontiguousarray(out), parents, backward, "conv2d")


def max_pool2d(x: Tensor, window: int, stride: int | None = None) -> Tensor:
    """Max pooling without padding; ties route the gradient to the first maximum."""
    if x.ndim != 4:
        raise DimensionError(f"max_pool2d: expected 4-D input, got {x.shape}")
    stride = window if stride is None else stride
    B, C, H, W = x.shape
    if window > H or window > W:
        raise DimensionError(f"max_pool2d: window {window} larger than input {H}x{W}")
    if stride < 1:
        raise ContractError("max_pool2d: stride must be >= 1")
    Ho = (H - window) // stride + 1
    Wo = (W - window) // stride + 1
    win = sliding_window_view(x.data, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = win.reshape(B, C, Ho, Wo, window * window)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        dx = np.zeros_like(x.data)
        for idx in range(window * window):
            i, j = divmod(idx, window)
            dx[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += g * (arg == idx)
        return (dx,)

    return Tensor.from_op(out, (x,), backward, "max_pool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise DimensionError(f"global_avg_pool: expected 4-D input, got {x.shape}")
    B, C, H, W = x.shape
    scale = 1.0 / (H * W)

    def backward(g):
        return (np.broadcast_to((g * scale)[:, :, None, None], x.shape).copy(),)

    return Tensor.from_op(x.data.mean(axis=(2, 3)), (x,), backward, "global_avg_pool")


# -- normalization -----------------------------------------------------------
def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    eps: float = 1e-5,
    momentum: float = 0.9,
) -> Tensor:
    """Per-channel batch normalization over every axis except axis 1.

    In train mode the batch statistics normalize the input and the running
    buffers are updated in place as ``momentum * running + (1 - momentum) * batch``
    (unbiased variance). Eval mode normalizes with the running buffers.
    """
    if x.ndim < 2:
        raise DimensionError(f"batch_norm: expected at least 2-D input, got {x.shape}")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise DimensionError(f"batch_norm: gamma/beta must have shape ({C},)")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, C) + (1,) * (x.ndim - 2)
    m = x.size // C

    if train:
        if m < 2:
            raise ContractError("batch_norm: train mode needs more than one element per channel")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var * (m / (m - 1))
    else:
        mu = running_mean.astype(x.dtype, copy=False)
        var = running_var.astype(x.dtype, copy=False)

    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype, copy=False)
    xhat = (x.data - mu.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)

    def backward(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(bshape)
        if train:
            dx = (inv_std.reshape(bshape) / m) * (
                m * dxhat
                - dxhat.sum(axis=axes).reshape(bshape)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape)
            )
        else:
            dx = dxhat * inv_std.reshape(bshape)
        return dx, dgamma, dbeta

    return Tensor.from_op(out, (x, gamma, beta), backward, "batch_norm")
