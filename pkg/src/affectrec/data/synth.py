"""Synthetic stand-ins for the categorical and dimensional face-video corpora.

Both kinds render frames from one shared bank of per-emotion spatial
patterns, so features learned on categorical data transfer to the
dimensional task. Categorical videos follow a semi-Markov emotion chain and
are labelled by simulated annotators; dimensional videos mix the happy,
disgust, surprise and neutral patterns according to smooth latent
(arousal, valence) processes and carry several lagged, noisy rater traces.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from ..objectives import EMOTIONS
from .schema import DEFAULT_PERIOD, EMOTION_INDEX, N_EMOTIONS, VideoRecord, realeyes_mixture

PATTERN_SEED = 20_190_412
# Subject-level sex ratio of the categorical corpus (1,517 female, 1,099 male).
FEMALE_FRACTION = 1517 / 2616


@dataclass
class SynthConfig:
    kind: str = "categorical"
    subjects: int = 10
    videos_per_subject: int = 2
    frames_per_video: int = 64
    image_size: int = 32
    channels: int = 3
    frame_period: float = DEFAULT_PERIOD
    seed: int = 0
    noise: float = 0.03
    pattern_strength: float = 0.35
    # appearance varies by subject (identity texture, illumination gain) and
    # frames carry small tracking jitter
    identity_strength: float = 0.15
    gain_range: tuple[float, float] = (0.8, 1.2)
    jitter: int = 1
    # categorical
    mixture: list[float] = field(default_factory=lambda: realeyes_mixture().tolist())
    mean_episode: int = 24
    intensity_range: tuple[float, float] = (0.4, 1.0)
    annotators: int = 7
    vote_accuracy: float = 0.8
    # dimensional
    raters: int = 6
    rater_noise: float = 0.05
    max_rater_lag: int = 4
    latent_periods: tuple[float, float] = (16.0, 64.0)
    partitions: tuple[str, ...] = ("train", "devel", "test")

    def __post_init__(self):
        if self.kind not in ("categorical", "dimensional"):
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        m = np.asarray(self.mixture, dtype=np.float64)
        if m.shape != (N_EMOTIONS,) or (m < 0).any() or m.sum() <= 0:
            raise ValueError("mixture must be 8 non-negative weights")
        self.mixture = (m / m.sum()).tolist()
        self.latent_periods = tuple(self.latent_periods)
        self.gain_range = tuple(self.gain_range)
        self.intensity_range = tuple(self.intensity_range)
        self.partitions = tuple(self.partitions)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def preset(cls, name: str, **overrides) -> SynthConfig:
        presets = {
            "categorical-desk": dict(kind="categorical", subjects=10, videos_per_subject=2, frames_per_video=64),
            "dimensional-desk": dict(kind="dimensional", subjects=9, videos_per_subject=1, frames_per_video=96),
            "categorical-paper": dict(
                kind="categorical", subjects=2616, videos_per_subject=2, frames_per_video=380, image_size=150
            ),
            "dimensional-paper": dict(
                kind="dimensional", subjects=46, videos_per_subject=1, frames_per_video=7500, image_size=150
            ),
        }
        if name not in presets:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(presets)}")
        return cls(**{**presets[name], **overrides})


# -- rendering ---------------------------------------------------------------
def pattern_bank(size: int, channels: int = 3) -> np.ndarray:
    """Deterministic smooth zero-mean pattern per emotion, [8, C, S, S] in [-1, 1]."""
    rng = np.random.default_rng(PATTERN_SEED)
    bank = np.empty((N_EMOTIONS, channels, size, size))
    for k in range(N_EMOTIONS):
        coarse = rng.standard_normal((channels, 4, 4))
        fine = ndimage.zoom(coarse, (1, size / 4, size / 4), order=1, mode="nearest", grid_mode=True)
        fine -= fine.mean()
        bank[k] = fine / np.abs(fine).max()
    return bank


def face_template(size: int, channels: int = 3) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2
    inside = ((yy - c) / (0.45 * size)) ** 2 + ((xx - c) / (0.36 * size)) ** 2 <= 1.0
    base = np.where(inside, 0.55, 0.2)
    return np.broadcast_to(base, (channels, size, size)).copy()


@dataclass
class Appearance:
    """Per-subject look: an additive identity texture and a brightness gain."""

    identity: np.ndarray
    gain: float

    @classmethod
    def sample(cls, cfg: SynthConfig, rng: np.random.Generator) -> Appearance:
        coarse = rng.standard_normal((cfg.channels, 4, 4))
        s = cfg.image_size
        fine = ndimage.zoom(coarse, (1, s / 4, s / 4), order=1, mode="nearest", grid_mode=True)
        fine -= fine.mean()
        return cls(cfg.identity_strength * fine / np.abs(fine).max(), float(rng.uniform(*cfg.gain_range)))

    @classmethod
    def neutral(cls, cfg: SynthConfig) -> Appearance:
        return cls(np.zeros((cfg.channels, cfg.image_size, cfg.image_size)), 1.0)


def _finish(expr: np.ndarray, cfg: SynthConfig, look: Appearance, rng: np.random.Generator) -> np.ndarray:
    """Compose face + identity + expression, then gain, jitter and sensor noise."""
    base = face_template(cfg.image_size, cfg.channels) + look.identity
    frames = look.gain * (base[None] + cfg.pattern_strength * expr)
    if cfg.jitter:
        shifts = rng.integers(-cfg.jitter, cfg.jitter + 1, size=(frames.shape[0], 2))
        for t, (dy, dx) in enumerate(shifts):
            if dy or dx:
                frames[t] = np.roll(frames[t], (int(dy), int(dx)), axis=(1, 2))
    frames += cfg.noise * rng.standard_normal(frames.shape)
    return np.clip(frames, 0.0, 1.0).astype(np.float32)


def episode_intensity(states: np.ndarray, bounds: tuple[float, float], rng: np.random.Generator) -> np.ndarray:
    """One expression intensity per run of identical states, held across the run."""
    starts = np.flatnonzero(np.r_[True, states[1:] != states[:-1]])
    levels = rng.uniform(*bounds, size=starts.size)
    lengths = np.diff(np.r_[starts, states.size])
    return np.repeat(levels, lengths)


def render_categorical(
    states: np.ndarray,
    cfg: SynthConfig,
    rng: np.random.Generator,
    look: Appearance | None = None,
) -> np.ndarray:
    """Each frame blends its emotion's prototype with the neutral one at the episode's intensity."""
    bank = pattern_bank(cfg.image_size, cfg.channels)
    level = episode_intensity(states, cfg.intensity_range, rng)[:, None, None, None]
    expr = level * bank[states] + (1.0 - level) * bank[EMOTION_INDEX["neutral"]]
    return _finish(expr, cfg, look or Appearance.neutral(cfg), rng)


def render_dimensional(
    latent: np.ndarray,
    cfg: SynthConfig,
    rng: np.random.Generator,
    look: Appearance | None = None,
) -> np.ndarray:
    """Frames whose prototype blend encodes (arousal, valence) per time step.

    Positive valence mixes in the happy prototype, negative valence the
    disgust one, and arousal the surprise one; the neutral prototype takes
    the remaining weight, as in categorical frames.
    """
    bank = pattern_bank(cfg.image_size, cfg.channels)
    a, v = latent[:, 0], latent[:, 1]
    w_happy = 0.5 * np.maximum(v, 0)
    w_disgust = 0.5 * np.maximum(-v, 0)
    w_surprise = 0.25 * (a + 1.0)
    weights = np.stack([w_happy, w_disgust, w_surprise, 1.0 - w_happy - w_disgust - w_surprise], axis=1)
    protos = bank[[EMOTION_INDEX[e] for e in ("happy", "disgust", "surprise", "neutral")]]
    expr = np.tensordot(weights, protos, axes=1)
    return _finish(expr, cfg, look or Appearance.neutral(cfg), rng)


# -- label processes ---------------------------------------------------------
def emotion_chain(n_frames: int, mixture, mean_episode: int, rng: np.random.Generator) -> np.ndarray:
    """Semi-Markov emotion states: episodes with i.i.d. emotions and uniform durations."""
    p = np.asarray(mixture, dtype=np.float64)
    lo, hi = max(1, mean_episode // 2), max(1, mean_episode // 2) + mean_episode
    states = np.empty(n_frames, dtype=np.int64)
    t = 0
    while t < n_frames:
        k = rng.choice(N_EMOTIONS, p=p)
        d = int(rng.integers(lo, hi))
        states[t : t + d] = k
        t += d
    return states


def simulate_votes(states: np.ndarray, annotators: int, accuracy: float, rng: np.random.Generator) -> np.ndarray:
    """Each annotator reports the true state with probability ``accuracy``, else a uniform emotion."""
    T = states.shape[0]
    correct = rng.random((T, annotators)) < accuracy
    random_votes = rng.integers(0, N_EMOTIONS, size=(T, annotators))
    return np.where(correct, states[:, None], random_votes).astype(np.uint8)


def latent_affect(n_frames: int, periods: tuple[float, float], rng: np.random.Generator) -> np.ndarray:
    """Smooth (arousal, valence) in [-0.9, 0.9]: sums of three random sinusoids."""
    t = np.arange(n_frames)
    out = np.empty((n_frames, 2))
    for d in range(2):
        per = rng.uniform(*periods, size=3)
        amp = rng.uniform(0.3, 1.0, size=3)
        phase = rng.uniform(0, 2 * np.pi, size=3)
        s = (amp[:, None] * np.sin(2 * np.pi * t[None, :] / per[:, None] + phase[:, None])).sum(axis=0)
        out[:, d] = 0.9 * s / amp.sum()
    return out


def rater_traces(latent: np.ndarray, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    T = latent.shape[0]
    traces = np.empty((cfg.raters, T, 2))
    for r in range(cfg.raters):
        lag = int(rng.integers(0, cfg.max_rater_lag + 1))
        idx = np.clip(np.arange(T) - lag, 0, T - 1)
        traces[r] = latent[idx] + cfg.rater_noise * rng.standard_normal((T, 2))
    return np.clip(traces, -1.0, 1.0).astype(np.float32)


def quota_states(
    counts: dict[str, int],
    episode: tuple[int, int],
    frames_per_video: int,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """Emotion-state videos with exact per-emotion frame totals.

    Each emotion's quota is cut into episodes of ``episode`` = (min, max)
    frames (a quota below the minimum is one episode), the episodes are
    shuffled, and videos are closed at episode boundaries once they reach
    ``frames_per_video`` frames.
    """
    lo, hi = episode
    episodes: list[tuple[int, int]] = []
    for name, total in counts.items():
        k = EMOTION_INDEX[name]
        left = int(total)
        while left > 0:
            d = left if left < 2 * lo else min(left - lo, int(rng.integers(lo, hi + 1)))
            episodes.append((k, d))
            left -= d
    order = rng.permutation(len(episodes))
    videos, current = [], []
    for i in order:
        k, d = episodes[i]
        current.append(np.full(d, k, dtype=np.int64))
        if sum(len(c) for c in current) >= frames_per_video:
            videos.append(np.concatenate(current))
            current = []
    if current:
        videos.append(np.concatenate(current))
    return videos


def one_hot(states: np.ndarray) -> np.ndarray:
    out = np.zeros((states.shape[0], N_EMOTIONS), dtype=np.uint8)
    out[np.arange(states.shape[0]), states] = 1
    return out


# -- corpus ------------------------------------------------------------------
def synth_videos(cfg: SynthConfig) -> list[VideoRecord]:
    """Generate every video of a synthetic corpus deterministically from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    videos = []
    subject_ids = [f"s{i:04d}" for i in range(cfg.subjects)]
    partition_of: dict[str, str] = {}
    if cfg.kind == "dimensional":
        perm = rng.permutation(cfg.subjects)
        chunks = np.array_split(perm, len(cfg.partitions))
        for name, chunk in zip(cfg.partitions, chunks):
            for i in chunk:
                partition_of[subject_ids[i]] = name
    for sid in subject_ids:
        sex = "female" if rng.random() < FEMALE_FRACTION else "male"
        look = Appearance.sample(cfg, rng)
        for j in range(cfg.videos_per_subject):
            vid = f"{sid}_v{j}"
            T = cfg.frames_per_video
            if cfg.kind == "categorical":
                states = emotion_chain(T, cfg.mixture, cfg.mean_episode, rng)
                votes = simulate_votes(states, cfg.annotators, cfg.vote_accuracy, rng)
                frames = render_categorical(states, cfg, rng, look)
                videos.append(
                    VideoRecord(vid, sid, frames, votes=votes, frame_period=cfg.frame_period, attributes={"sex": sex})
                )
            else:
                latent = latent_affect(T, cfg.latent_periods, rng)
                frames = render_dimensional(latent, cfg, rng, look)
                traces = rater_traces(latent, cfg, rng)
                videos.append(
                    VideoRecord(
                        vid,
                        sid,
                        frames,
                        traces=traces,
                        frame_period=cfg.frame_period,
                        partition=partition_of[sid],
                        attributes={"sex": sex},
                    )
                )
    return videos


def synth_generate(cfg: SynthConfig, out_dir, force: bool = False):
    """Generate a corpus and write it as a dataset directory; returns the path."""
    from .storage import write_dataset

    return write_dataset(out_dir, synth_videos(cfg), kind=cfg.kind, generator=cfg.to_dict(), force=force)


__all__ = [
    "EMOTIONS",
    "Appearance",
    "SynthConfig",
    "emotion_chain",
    "latent_affect",
    "one_hot",
    "pattern_bank",
    "quota_states",
    "simulate_votes",
    "synth_generate",
    "synth_videos",
]
