"""Scale and colour augmentation for face crops in [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

RESIZE_FACTOR = 170 / 150
BRIGHTNESS_RANGE = 0.125
SATURATION_RANGE = (0.5, 1.5)
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AugmentParams:
    crop_y: int
    crop_x: int
    brightness: float
    saturation: float


def enlarged_size(h: int, w: int, factor: float = RESIZE_FACTOR) -> tuple[int, int]:
    return int(round(h * factor)), int(round(w * factor))


def sample_params(
    rng: np.random.Generator,
    shape: tuple[int, ...],
    factor: float = RESIZE_FACTOR,
    brightness: float = BRIGHTNESS_RANGE,
    saturation: tuple[float, float] = SATURATION_RANGE,
) -> AugmentParams:
    h, w = shape[-2:]
    hn, wn = enlarged_size(h, w, factor)
    return AugmentParams(
        int(rng.integers(0, hn - h + 1)),
        int(rng.integers(0, wn - w + 1)),
        float(rng.uniform(-brightness, brightness)),
        float(rng.uniform(*saturation)),
    )


def centre_params(shape: tuple[int, ...], factor: float = RESIZE_FACTOR) -> AugmentParams:
    h, w = shape[-2:]
    hn, wn = enlarged_size(h, w, factor)
    return AugmentParams((hn - h) // 2, (wn - w) // 2, 0.0, 1.0)


def apply_params(image: np.ndarray, p: AugmentParams, factor: float = RESIZE_FACTOR) -> np.ndarray:
    """Bilinear enlarge, crop back, shift brightness, scale saturation, clamp.

    ``image`` is [C, H, W] or a stack [..., C, H, W]; every leading image
    gets the same parameters.
    """
    h, w = image.shape[-2:]
    hn, wn = enlarged_size(h, w, factor)
    zoom = (1.0,) * (image.ndim - 2) + (hn / h, wn / w)
    big = ndimage.zoom(image, zoom, order=1, mode="nearest", grid_mode=True)
    out = big[..., p.crop_y : p.crop_y + h, p.crop_x : p.crop_x + w] + p.brightness
    if image.shape[-3] == 3:
        gray = np.tensordot(np.moveaxis(out, -3, -1), _LUMA, axes=1)[..., None, :, :]
        out = gray + p.saturation * (out - gray)
    return np.clip(out, 0.0, 1.0).astype(image.dtype, copy=False)


def augment(frame: np.ndarray, rng: np.random.Generator | None, enabled: bool = True) -> np.ndarray:
    """Random scale crop plus colour jitter; identity when disabled."""
    if not enabled or rng is None:
        return frame
    return apply_params(frame, sample_params(rng, frame.shape))


def augment_clip(clip: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Augment every frame of a [T, C, H, W] clip with one shared draw."""
    return apply_params(clip, sample_params(rng, clip.shape))
