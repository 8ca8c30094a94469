"""Data schemas, annotation fusion, windowing, oversampling, splits,
augmentation and the synthetic corpus generator."""

from .annotation import agreement_weights, fuse_annotations, fuse_vote_indices, gold_standard, resample_trace
from .augment import AugmentParams, apply_params, augment, augment_clip, centre_params, sample_params
from .sampling import OversampleResult, frame_counts, oversample, subject_split, window_dataset
from .schema import (
    FREQUENT_EMOTIONS,
    RARE_EMOTIONS,
    REALEYES_FRAME_COUNTS,
    REALEYES_OVERSAMPLED_TRAIN_COUNTS,
    AffectTrace,
    VideoRecord,
    Window,
    paper_oversample_multipliers,
    realeyes_mixture,
)
from .storage import Dataset, DatasetExistsError, load_dataset, write_dataset
from .synth import Appearance, SynthConfig, one_hot, quota_states, synth_generate, synth_videos

__all__ = [
    "FREQUENT_EMOTIONS",
    "RARE_EMOTIONS",
    "REALEYES_FRAME_COUNTS",
    "REALEYES_OVERSAMPLED_TRAIN_COUNTS",
    "AffectTrace",
    "Appearance",
    "AugmentParams",
    "Dataset",
    "DatasetExistsError",
    "OversampleResult",
    "SynthConfig",
    "VideoRecord",
    "Window",
    "agreement_weights",
    "apply_params",
    "augment",
    "augment_clip",
    "centre_params",
    "frame_counts",
    "fuse_annotations",
    "fuse_vote_indices",
    "gold_standard",
    "load_dataset",
    "one_hot",
    "oversample",
    "paper_oversample_multipliers",
    "quota_states",
    "realeyes_mixture",
    "resample_trace",
    "sample_params",
    "subject_split",
    "synth_generate",
    "synth_videos",
    "window_dataset",
]
