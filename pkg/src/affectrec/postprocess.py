"""Prediction post-processing: median filter, centring, scaling and time shift,
each kept only if it improves validation CCC."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .engine.tensor import ContractError
from .objectives import ccc

logger = logging.getLogger(__name__)

DIMENSIONS = ("arousal", "valence")
MEDIAN_RANGE_S = (0.04, 20.0)
SHIFT_RANGE_S = (0.04, 10.0)
GRID_POINTS = 20
# improvements at or below this are rounding noise, not a better chain
MIN_GAIN = 1e-12


def median_filter(series, window: int) -> np.ndarray:
    """Centred sliding median; edges replicate the first/last value."""
    if window < 1 or window % 2 == 0:
        raise ContractError(f"median window must be odd and >= 1, got {window}")
    x = np.asarray(series, dtype=np.float64)
    if window == 1:
        return x.copy()
    # explicit edge padding: scipy returns zeros when the window exceeds the series
    h = window // 2
    padded = np.pad(x, h, mode="edge")
    return ndimage.median_filter(padded, size=window, mode="nearest")[h:-h]


def centre(pred, pred_bias: float, gold_bias: float) -> np.ndarray:
    return np.asarray(pred, dtype=np.float64) - pred_bias + gold_bias


def scale(pred, ratio: float, pivot: float) -> np.ndarray:
    """Rescale deviations about ``pivot`` (the validation prediction mean) by ``ratio``."""
    return (np.asarray(pred, dtype=np.float64) - pivot) * ratio + pivot


def time_shift(pred, shift: int) -> np.ndarray:
    """Delay by ``shift`` frames, holding the first value at the start."""
    x = np.asarray(pred, dtype=np.float64)
    if shift < 0 or shift >= x.size:
        raise ContractError(f"shift {shift} outside [0, {x.size})")
    if shift == 0:
        return x.copy()
    return np.concatenate([np.full(shift, x[0]), x[:-shift]])


def _segmented(fn, x: np.ndarray, segments: Sequence[int] | None, *args) -> np.ndarray:
    if not segments:
        return fn(x, *args)
    out, start = [], 0
    for n in segments:
        out.append(fn(x[start : start + n], *args))
        start += n
    return np.concatenate(out)


def _segment_means(x: np.ndarray, segments: Sequence[int]) -> np.ndarray:
    out, start = np.empty_like(x), 0
    for n in segments:
        out[start : start + n] = x[start : start + n].mean()
        start += n
    return out


def geometric_grid(lo: int, hi: int, points: int = GRID_POINTS, odd: bool = False) -> list[int]:
    """About ``points`` integers spaced geometrically in [lo, hi], deduplicated."""
    raw = np.geomspace(lo, hi, points)
    vals = []
    for r in raw:
        v = int(round(r))
        if odd and v % 2 == 0:
            v = v + 1 if v + 1 <= hi else v - 1
        v = min(max(v, lo), hi)
        if v not in vals:
            vals.append(v)
    return vals


@dataclass
class DimensionChain:
    """Accepted steps for one output dimension; ``None`` marks a rejected step."""

    median_window: int | None = None
    centre: tuple[float, float] | None = None
    scale: tuple[float, float] | None = None
    shift: int | None = None
    raw_ccc: float = 0.0
    step_ccc: dict[str, float] = field(default_factory=dict)

    @property
    def final_ccc(self) -> float:
        return max(self.step_ccc.values(), default=self.raw_ccc)


@dataclass
class ChainConfig:
    frame_period: float = 0.04
    per_recording: bool = False
    dimensions: dict[str, DimensionChain] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ChainConfig:
        dims = {}
        for name, c in d.get("dimensions", {}).items():
            c = dict(c)
            for key in ("centre", "scale"):
                if c.get(key) is not None:
                    c[key] = tuple(c[key])
            dims[name] = DimensionChain(**c)
        return cls(d.get("frame_period", 0.04), d.get("per_recording", False), dims)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> ChainConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _apply_dimension(
    c: DimensionChain, pred: np.ndarray, segments: Sequence[int] | None, per_recording: bool
) -> np.ndarray:
    x = np.asarray(pred, dtype=np.float64)
    if c.median_window is not None:
        x = _segmented(median_filter, x, segments, c.median_window)
    if c.centre is not None:
        pred_bias, gold_bias = c.centre
        if per_recording and segments:
            x = x - _segment_means(x, segments) + gold_bias
        else:
            x = centre(x, pred_bias, gold_bias)
    if c.scale is not None:
        ratio, pivot = c.scale
        if per_recording and segments:
            m = _segment_means(x, segments)
            x = (x - m) * ratio + m
        else:
            x = scale(x, ratio, pivot)
    if c.shift is not None:
        x = _segmented(time_shift, x, segments, c.shift)
    return x


def search_dimension(
    pred,
    gold,
    frame_period: float = 0.04,
    segments: Sequence[int] | None = None,
    per_recording: bool = False,
) -> DimensionChain:
    """Greedy median -> centre -> scale -> shift search on one dimension.

    A step is kept only if it strictly raises the CCC of the running
    pipeline; later steps are tuned on the output of the accepted ones.
    """
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(gold, dtype=np.float64)
    if x.shape != y.shape:
        raise ContractError("prediction and gold must be aligned")
    segments = list(segments) if segments else None
    shortest = min(segments) if segments else x.size
    chain = DimensionChain(raw_ccc=ccc(x, y).rho_c)
    best = chain.raw_ccc

    # (a) median filter
    hi = max(1, int(round(MEDIAN_RANGE_S[1] / frame_period)))
    lo = max(1, int(round(MEDIAN_RANGE_S[0] / frame_period)))
    cand_best, cand_w = best, None
    for w in geometric_grid(lo, hi, odd=True):
        score = ccc(_segmented(median_filter, x, segments, w), y).rho_c
        if score > cand_best + MIN_GAIN:
            cand_best, cand_w = score, w
    if cand_w is not None:
        chain.median_window, best = cand_w, cand_best
        chain.step_ccc["median"] = best
        x = _segmented(median_filter, x, segments, cand_w)

    # (b) centring
    trial = DimensionChain(centre=(float(x.mean()), float(y.mean())))
    cx = _apply_dimension(trial, x, segments, per_recording)
    score = ccc(cx, y).rho_c
    if score > best + MIN_GAIN:
        chain.centre, best, x = trial.centre, score, cx
        chain.step_ccc["centre"] = best

    # (c) scaling
    sd = x.std()
    if sd > 1e-12 * max(1.0, abs(float(x.mean()))):
        trial = DimensionChain(scale=(float(y.std() / sd), float(x.mean())))
        sx = _apply_dimension(trial, x, segments, per_recording)
        score = ccc(sx, y).rho_c
        if score > best + MIN_GAIN:
            chain.scale, best, x = trial.scale, score, sx
            chain.step_ccc["scale"] = best
    else:
        logger.warning("scaling skipped: validation predictions have zero variance")

    # (d) time shift
    hi = max(1, int(round(SHIFT_RANGE_S[1] / frame_period)))
    lo = max(1, int(round(SHIFT_RANGE_S[0] / frame_period)))
    cand_best, cand_s = best, None
    for s in geometric_grid(lo, hi):
        if s >= shortest:
            continue
        score = ccc(_segmented(time_shift, x, segments, s), y).rho_c
        if score > cand_best + MIN_GAIN:
            cand_best, cand_s = score, s
    if cand_s is not None:
        chain.shift, best = cand_s, cand_best
        chain.step_ccc["shift"] = best
    return chain


def chain_search(
    val_pred,
    val_gold,
    frame_period: float = 0.04,
    segments: Sequence[int] | None = None,
    per_recording: bool = False,
    dimensions: Sequence[str] = DIMENSIONS,
) -> ChainConfig:
    """Search a chain per output dimension; ``val_pred`` is [N] or [N, K]."""
    p = np.asarray(val_pred, dtype=np.float64)
    g = np.asarray(val_gold, dtype=np.float64)
    if p.ndim == 1:
        p, g = p[:, None], g[:, None]
    config = ChainConfig(frame_period, per_recording)
    for k in range(p.shape[1]):
        name = dimensions[k] if k < len(dimensions) else f"dim{k}"
        config.dimensions[name] = search_dimension(p[:, k], g[:, k], frame_period, segments, per_recording)
    return config


def apply_chain(
    config: ChainConfig,
    pred,
    segments: Sequence[int] | None = None,
    dimensions: Sequence[str] = DIMENSIONS,
) -> np.ndarray:
    """Replay the accepted steps with their frozen parameters."""
    p = np.asarray(pred, dtype=np.float64)
    squeeze = p.ndim == 1
    if squeeze:
        p = p[:, None]
    out = p.copy()
    for k in range(p.shape[1]):
        name = dimensions[k] if k < len(dimensions) else f"dim{k}"
        c = config.dimensions.get(name)
        if c is not None:
            out[:, k] = _apply_dimension(c, p[:, k], segments, config.per_recording)
    return out[:, 0] if squeeze else out
