"""Losses and metrics: weighted multi-label sigmoid cross-entropy and the
concordance correlation coefficient (CCC)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .engine.ops import stable_sigmoid
from .engine.tensor import ContractError, DimensionError, Tensor, as_tensor

EMOTIONS = ("neutral", "happy", "surprise", "disgust", "contempt", "confusion", "empathy", "other")


@dataclass(frozen=True)
class ClassWeights:
    weights: np.ndarray
    names: tuple[str, ...] = EMOTIONS

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or (w <= 0).any():
            raise ContractError("class weights must be a vector of positive reals")
        object.__setattr__(self, "weights", w)

    def as_dict(self) -> dict[str, float]:
        return {name: float(w) for name, w in zip(self.names, self.weights)}


def class_weights(frame_counts: Sequence[int], names: Sequence[str] = EMOTIONS) -> ClassWeights:
    """Reciprocal-frequency weights rescaled to mean 1."""
    counts = np.asarray(frame_counts, dtype=np.float64)
    if (counts < 1).any():
        raise ContractError(f"every class needs at least one frame, got {list(frame_counts)}")
    inv = 1.0 / counts
    names = tuple(names) if len(names) == len(counts) else tuple(f"class{i}" for i in range(len(counts)))
    return ClassWeights(inv * len(inv) / inv.sum(), names)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))


def frame_weights(labels: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Mean class weight over each frame's active emotions.

    Frames with no active emotion get the mean weight (1 after normalization).
    """
    active = labels.sum(axis=1)
    summed = labels @ weights
    fallback = weights.mean()
    return np.where(active > 0, summed / np.maximum(active, 1), fallback)


def weighted_sigmoid_ce(
    logits: Tensor,
    labels,
    weights: ClassWeights | np.ndarray | None = None,
) -> Tensor:
    """Frame-weighted binary cross-entropy on raw logits, averaged over all elements.

    Uses ``softplus(x) - z*x``, which equals ``-[z log s(x) + (1-z) log(1-s(x))]``
    without ever taking the log of a saturated sigmoid.
    """
    x = as_tensor(logits)
    z = np.asarray(labels.data if isinstance(labels, Tensor) else labels, dtype=x.dtype)
    if z.shape != x.shape:
        raise DimensionError(f"labels {z.shape} vs logits {x.shape}")
    if not np.isin(z, (0.0, 1.0)).all():
        raise ContractError("labels must be 0 or 1")
    if x.size == 0:
        raise ContractError("need at least one frame")
    C = x.shape[-1]
    xf = x.data.reshape(-1, C)
    zf = z.reshape(-1, C)
    if weights is None:
        w = np.ones(C)
    else:
        w = weights.weights if isinstance(weights, ClassWeights) else np.asarray(weights, dtype=np.float64)
        if w.shape != (C,):
            raise DimensionError(f"{w.shape[0]} class weights for {C} logits")
    fw = frame_weights(zf.astype(np.float64), w).astype(x.dtype)[:, None]
    n = xf.size
    loss = np.asarray((fw * (_softplus(xf) - zf * xf)).sum() / n, dtype=x.dtype)

    def backward(g):
        return ((g * fw * (stable_sigmoid(xf) - zf) / n).reshape(x.shape).astype(x.dtype, copy=False),)

    return Tensor.from_op(loss, (x,), backward, "weighted_sigmoid_ce")


# -- concordance -------------------------------------------------------------
@dataclass(frozen=True)
class CccResult:
    rho_c: float
    mean_pred: float
    mean_gold: float
    var_pred: float
    var_gold: float
    covariance: float


def ccc(pred, gold, ddof: int = 0) -> CccResult:
    """Concordance correlation coefficient with population moments by default.

    Two identical constant series score 1; otherwise a zero covariance with a
    nonzero denominator scores 0.
    """
    x = np.asarray(pred, dtype=np.float64).reshape(-1)
    y = np.asarray(gold, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ContractError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ContractError("ccc needs at least two samples")
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    denom_n = x.size - ddof
    vx = (dx * dx).sum() / denom_n
    vy = (dy * dy).sum() / denom_n
    sxy = (dx * dy).sum() / denom_n
    denom = vx + vy + (mx - my) ** 2
    rho = 1.0 if denom == 0 else 2.0 * sxy / denom
    return CccResult(float(rho), float(mx), float(my), float(vx), float(vy), float(sxy))


def ccc_loss(pred: Tensor, gold, eps: float = 1e-8, ddof: int = 0, per_sequence: bool = True) -> Tensor:
    """``1 - CCC`` averaged over sequences and output dimensions.

    ``pred`` is [B, T] or [B, T, K]. With ``per_sequence`` the CCC is taken
    over time within each sequence; otherwise sequences are concatenated per
    output dimension first. The denominator is floored at ``eps`` so constant
    predictions give a finite gradient.
    """
    p = as_tensor(pred)
    g_arr = np.asarray(gold.data if isinstance(gold, Tensor) else gold, dtype=p.dtype)
    if g_arr.shape != p.shape:
        raise DimensionError(f"gold {g_arr.shape} vs pred {p.shape}")
    if p.ndim not in (2, 3):
        raise DimensionError(f"ccc_loss expects [B,T] or [B,T,K], got {p.shape}")
    x = p.data if p.ndim == 3 else p.data[..., None]
    y = g_arr if g_arr.ndim == 3 else g_arr[..., None]
    B, T, K = x.shape
    if not per_sequence:
        x = x.reshape(1, B * T, K)
        y = y.reshape(1, B * T, K)
    n = x.shape[1]
    if n < 2:
        raise ContractError("ccc_loss needs at least two time steps")
    c = 1.0 / (n - ddof)
    mx, my = x.mean(axis=1, keepdims=True), y.mean(axis=1, keepdims=True)
    dx, dy = x - mx, y - my
    vx = (dx * dx).sum(axis=1, keepdims=True) * c
    vy = (dy * dy).sum(axis=1, keepdims=True) * c
    sxy = (dx * dy).sum(axis=1, keepdims=True) * c
    raw = vx + vy + (mx - my) ** 2
    floored = raw < eps
    denom = np.where(floored, eps, raw)
    rho = 2.0 * sxy / denom
    count = rho.size
    loss = np.asarray((1.0 - rho).sum() / count, dtype=p.dtype)

    def backward(g):
        d_sxy = c * dy
        d_denom = np.where(floored, 0.0, 2.0 * c * dx + 2.0 * (mx - my) / n)
        drho = 2.0 * d_sxy / denom - 2.0 * sxy / denom**2 * d_denom
        grad = (-g / count) * drho
        return (grad.reshape(p.shape).astype(p.dtype, copy=False),)

    return Tensor.from_op(loss, (p,), backward, "ccc_loss")
