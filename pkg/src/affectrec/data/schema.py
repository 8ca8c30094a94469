"""Record types for categorical and dimensional affect data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..engine.tensor import ContractError
from ..objectives import EMOTIONS

N_EMOTIONS = len(EMOTIONS)
EMOTION_INDEX = {name: i for i, name in enumerate(EMOTIONS)}
DEFAULT_PERIOD = 0.040

# Frames per emotion in the full categorical corpus.
REALEYES_FRAME_COUNTS = {
    "neutral": 840_611,
    "happy": 60_179,
    "surprise": 15_786,
    "disgust": 10_065,
    "contempt": 8_581,
    "confusion": 56_683,
    "empathy": 10_173,
    "other": 57_425,
}
# Training-partition frames per emotion after window oversampling.
REALEYES_OVERSAMPLED_TRAIN_COUNTS = {
    "neutral": 877_410,
    "happy": 298_222,
    "surprise": 237_041,
    "disgust": 32_044,
    "contempt": 18_537,
    "confusion": 265_495,
    "empathy": 21_444,
    "other": 52_375,
}
RARE_EMOTIONS = ("happy", "surprise", "disgust", "confusion", "empathy", "contempt")
FREQUENT_EMOTIONS = ("neutral",)


def realeyes_mixture() -> np.ndarray:
    counts = np.array([REALEYES_FRAME_COUNTS[e] for e in EMOTIONS], dtype=np.float64)
    return counts / counts.sum()


def paper_oversample_multipliers() -> dict[str, float]:
    """Per-rare-emotion growth factor implied by the corpus before/after counts."""
    return {e: REALEYES_OVERSAMPLED_TRAIN_COUNTS[e] / REALEYES_FRAME_COUNTS[e] for e in RARE_EMOTIONS}


def emotion_mask(names) -> np.ndarray:
    mask = np.zeros(N_EMOTIONS, dtype=bool)
    for n in names:
        if n not in EMOTION_INDEX:
            raise ContractError(f"unknown emotion {n!r}")
        mask[EMOTION_INDEX[n]] = True
    return mask


@dataclass
class AffectTrace:
    """(arousal, valence) samples at a fixed period in seconds."""

    values: np.ndarray
    period: float = DEFAULT_PERIOD

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, 2)
        if self.period <= 0:
            raise ContractError("trace period must be positive")
        if not np.isfinite(self.values).all():
            raise ContractError("trace values must be finite")

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass
class VideoRecord:
    """One subject recording.

    ``votes`` holds per-frame annotator choices as emotion indices [T, A];
    ``traces`` holds per-rater dimensional annotations [R, T, 2].
    """

    video_id: str
    subject_id: str
    frames: np.ndarray | None
    votes: np.ndarray | None = None
    traces: np.ndarray | None = None
    frame_period: float = DEFAULT_PERIOD
    partition: str | None = None
    attributes: dict = field(default_factory=dict)
    n_frames: int = 0

    def __post_init__(self):
        if self.votes is None and self.traces is None:
            raise ContractError(f"{self.video_id}: needs votes or traces")
        lengths = set()
        if self.frames is not None:
            lengths.add(self.frames.shape[0])
        if self.votes is not None:
            self.votes = np.asarray(self.votes, dtype=np.uint8)
            if self.votes.max(initial=0) >= N_EMOTIONS:
                raise ContractError(f"{self.video_id}: vote index out of range")
            lengths.add(self.votes.shape[0])
        if self.traces is not None:
            lengths.add(self.traces.shape[1])
        if len(lengths) > 1:
            raise ContractError(f"{self.video_id}: frames/labels lengths differ {sorted(lengths)}")
        self.n_frames = lengths.pop()

    @property
    def label_kind(self) -> str:
        return "votes" if self.votes is not None else "traces"

    def vote_matrix(self, t: int) -> np.ndarray:
        """Annotator-by-emotion one-hot matrix for frame ``t``."""
        m = np.zeros((self.votes.shape[1], N_EMOTIONS), dtype=np.int64)
        m[np.arange(self.votes.shape[1]), self.votes[t]] = 1
        return m

    def rater_traces(self) -> list[AffectTrace]:
        return [AffectTrace(r, self.frame_period) for r in self.traces]


@dataclass(frozen=True)
class Window:
    video_id: str
    start: int
    length: int
    provenance: str = "original"

    @property
    def stop(self) -> int:
        return self.start + self.length
