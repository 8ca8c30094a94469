"""Annotation fusion: winner-takes-all categorical labels and dimensional gold standards."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..engine.tensor import ContractError
from ..objectives import ccc
from .schema import N_EMOTIONS, AffectTrace


def fuse_annotations(votes) -> np.ndarray:
    """Multi-hot label of the emotions with the most votes.

    ``votes`` is an annotators x emotions 0/1 matrix with one vote per row.
    Ties make every tied emotion active.
    """
    v = np.asarray(votes)
    if v.ndim != 2 or v.shape[1] != N_EMOTIONS or v.shape[0] < 1:
        raise ContractError(f"vote matrix must be [annotators, {N_EMOTIONS}], got {v.shape}")
    if not np.isin(v, (0, 1)).all() or not (v.sum(axis=1) == 1).all():
        raise ContractError("each annotator must cast exactly one vote")
    totals = v.sum(axis=0)
    return (totals == totals.max()).astype(np.uint8)


def fuse_vote_indices(votes: np.ndarray) -> np.ndarray:
    """Vectorised :func:`fuse_annotations` for per-frame vote indices [T, A] -> [T, 8]."""
    votes = np.asarray(votes)
    T, A = votes.shape
    counts = np.zeros((T, N_EMOTIONS), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(T), A), votes.reshape(-1).astype(np.int64)), 1)
    return (counts == counts.max(axis=1, keepdims=True)).astype(np.uint8)


def agreement_weights(values: np.ndarray) -> np.ndarray:
    """Rater weights from each rater's CCC against the all-rater mean.

    ``values`` is [R, T]. This is the evaluator-weighted convention: the
    reference includes every rater, so with one dissenter among several
    concordant raters the dissenter still scores lowest. Negative agreement
    is clipped to zero before normalising; if no rater agrees the weights
    are uniform.
    """
    R = values.shape[0]
    if R == 1:
        return np.ones(1)
    reference = values.mean(axis=0)
    scores = np.array([ccc(values[r], reference).rho_c for r in range(R)])
    scores = np.clip(scores, 0.0, None)
    if scores.sum() == 0:
        return np.full(R, 1.0 / R)
    return scores / scores.sum()


def gold_standard(traces: Sequence[AffectTrace], mode: str = "mean") -> AffectTrace:
    """Fuse per-rater traces into one reference trace.

    ``mode="mean"`` averages raters per time step; ``mode="agreement"``
    weights each rater (per dimension) by :func:`agreement_weights`.
    """
    if not traces:
        raise ContractError("gold standard needs at least one trace")
    period = traces[0].period
    n = len(traces[0])
    for t in traces:
        if len(t) != n or not math.isclose(t.period, period):
            raise ContractError("all traces must share length and period")
    stacked = np.stack([t.values for t in traces])
    if mode == "mean":
        return AffectTrace(stacked.mean(axis=0), period)
    if mode == "agreement":
        if n < 2:
            return AffectTrace(stacked.mean(axis=0), period)
        out = np.empty((n, 2))
        for d in range(2):
            w = agreement_weights(stacked[:, :, d])
            out[:, d] = w @ stacked[:, :, d]
        return AffectTrace(out, period)
    raise ContractError(f"unknown gold-standard mode {mode!r}")


def resample_trace(trace: AffectTrace, target_period: float) -> AffectTrace:
    """Nearest-neighbour resampling onto a grid starting at t=0."""
    if target_period <= 0:
        raise ContractError("target period must be positive")
    n = len(trace)
    if n == 0:
        raise ContractError("cannot resample an empty trace")
    duration = (n - 1) * trace.period
    # 1e-9 absorbs float error in ratios such as 0.04/0.02
    out_len = int(math.floor(duration / target_period + 1e-9)) + 1
    pos = np.arange(out_len) * (target_period / trace.period)
    idx = np.clip(np.floor(pos + 0.5 + 1e-9).astype(np.int64), 0, n - 1)
    return AffectTrace(trace.values[idx], target_period)
