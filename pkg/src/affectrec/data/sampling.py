"""Windowing, minority-emotion window oversampling and subject-disjoint splits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..engine.tensor import ContractError
from ..objectives import EMOTIONS
from .schema import EMOTION_INDEX, FREQUENT_EMOTIONS, RARE_EMOTIONS, VideoRecord, Window, emotion_mask


def window_dataset(videos: Sequence[VideoRecord], length: int, stride: int | None = None) -> list[Window]:
    """Tile each video with windows of ``length`` frames; a short tail is dropped."""
    if length < 1:
        raise ContractError("window length must be >= 1")
    stride = length if stride is None else stride
    if stride < 1:
        raise ContractError("window stride must be >= 1")
    windows = []
    for v in videos:
        for start in range(0, v.n_frames - length + 1, stride):
            windows.append(Window(v.video_id, start, length))
    return windows


def window_label_counts(window: Window, labels: Mapping[str, np.ndarray]) -> np.ndarray:
    return labels[window.video_id][window.start : window.stop].sum(axis=0).astype(np.int64)


def frame_counts(windows: Sequence[Window], labels: Mapping[str, np.ndarray]) -> np.ndarray:
    """Active-frame count per emotion over all windows (duplicates counted again)."""
    total = np.zeros(len(EMOTIONS), dtype=np.int64)
    for w in windows:
        total += window_label_counts(w, labels)
    return total


@dataclass
class OversampleResult:
    windows: list[Window]
    counts_before: np.ndarray
    counts_after: np.ndarray
    targets: dict[str, float]
    frames_before: int
    warnings: list[str] = field(default_factory=list)

    @property
    def added(self) -> int:
        return sum(w.provenance == "resampled" for w in self.windows)

    def shares(self, after: bool = True) -> dict[str, float]:
        counts = self.counts_after if after else self.counts_before
        frames = sum(w.length for w in self.windows) if after else self.frames_before
        return {e: float(c) / frames for e, c in zip(EMOTIONS, counts)}


def oversample(
    windows: Sequence[Window],
    labels: Mapping[str, np.ndarray],
    rare: Sequence[str] = RARE_EMOTIONS,
    frequent: Sequence[str] = FREQUENT_EMOTIONS,
    multiplier: float | Mapping[str, float] = 3.0,
    candidates: Sequence[Window] | None = None,
    seed: int = 0,
) -> OversampleResult:
    """Duplicate minority-emotion windows until each rare emotion hits its target.

    A window is eligible when it holds at least one frame of a rare emotion
    and no frame of a frequent one. Eligible windows are drawn from
    ``candidates`` (default: ``windows`` themselves) and appended with
    provenance ``"resampled"``; originals are always kept. The target of a
    rare emotion is ``multiplier * its original frame count``. At each step
    the rare emotion furthest (relatively) from its target receives the next
    copy, cycling through a seeded shuffle of its eligible windows.
    """
    rare, frequent = tuple(rare), tuple(frequent)
    if set(rare) & set(frequent):
        raise ContractError("rare and frequent emotion sets must be disjoint")
    rare_mask, freq_mask = emotion_mask(rare), emotion_mask(frequent)
    mult = {e: float(multiplier[e] if isinstance(multiplier, Mapping) else multiplier) for e in rare}

    out = list(windows)
    before = frame_counts(out, labels)
    counts = before.copy()
    targets = {e: mult[e] * before[EMOTION_INDEX[e]] for e in rare}

    pool_src = list(windows) if candidates is None else list(candidates)
    rng = np.random.default_rng(seed)
    pools: dict[str, list[Window]] = {e: [] for e in rare}
    pool_counts: dict[Window, np.ndarray] = {}
    for w in pool_src:
        c = window_label_counts(w, labels)
        if c[rare_mask].sum() > 0 and c[freq_mask].sum() == 0:
            pool_counts[w] = c
            for e in rare:
                if c[EMOTION_INDEX[e]] > 0:
                    pools[e].append(w)
    for e in rare:
        order = rng.permutation(len(pools[e]))
        pools[e] = [pools[e][i] for i in order]

    warnings = [
        f"no eligible window for {e}"
        for e in rare
        if before[EMOTION_INDEX[e]] > 0 and targets[e] > before[EMOTION_INDEX[e]] and not pools[e]
    ]
    cursor = {e: 0 for e in rare}
    while True:
        deficits = {
            e: (targets[e] - counts[EMOTION_INDEX[e]]) / targets[e]
            for e in rare
            if pools[e] and counts[EMOTION_INDEX[e]] < targets[e]
        }
        if not deficits:
            break
        e = max(deficits, key=lambda k: (deficits[k], -rare.index(k)))
        w = pools[e][cursor[e] % len(pools[e])]
        cursor[e] += 1
        out.append(Window(w.video_id, w.start, w.length, "resampled"))
        counts += pool_counts[w]

    return OversampleResult(out, before, counts, targets, sum(w.length for w in windows), warnings)


def subject_split(
    videos: Sequence[VideoRecord], train_fraction: float = 0.8, seed: int = 0
) -> tuple[list[VideoRecord], list[VideoRecord]]:
    """Partition videos by subject; the validation side gets floor((1-f)*n) >= 1 subjects."""
    subjects = sorted({v.subject_id for v in videos})
    n = len(subjects)
    if n < 2:
        raise ContractError(f"subject split needs at least 2 subjects, got {n}")
    n_val = min(n - 1, max(1, int(math.floor(n * (1.0 - train_fraction) + 1e-9))))
    perm = np.random.default_rng(seed).permutation(n)
    val_subjects = {subjects[i] for i in perm[:n_val]}
    train = [v for v in videos if v.subject_id not in val_subjects]
    val = [v for v in videos if v.subject_id in val_subjects]
    return train, val
