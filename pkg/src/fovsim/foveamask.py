"""Eccentricity mask: the fourth input channel gating on the fovea radius.

Each pixel carries its Euclidean distance to the fixation point, zeroed
inside the closed foveal disk (distance <= fovea radius). Distances are
computed in double precision and rounded once to float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .imagekit import Fixation, Image


@dataclass(frozen=True)
class MaskChannel:
    """Per-pixel gated distances to the fixation, float32, shape (h, w)."""

    values: np.ndarray

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def build_mask(h: int, w: int, fix: Fixation) -> MaskChannel:
    """Distance-to-fixation map, zero wherever distance <= fovea radius."""
    fix.bound_check(h, w)
    yy = np.arange(h, dtype=np.float64)[:, None] - fix.fy
    xx = np.arange(w, dtype=np.float64)[None, :] - fix.fx
    d = np.hypot(yy, xx)
    gated = np.where(d > fix.fovea_radius, d, 0.0)
    return MaskChannel(gated.astype(np.float32))


def diagonal_normalizer(h: int, w: int) -> float:
    """Image diagonal length, the default mask normalizer."""
    return float(np.hypot(h, w))


def attach_mask(img: Image, mask: MaskChannel, normalizer: float | None = None) -> Image:
    """Append mask / normalizer as a fourth channel (first three untouched)."""
    if (img.height, img.width) != (mask.height, mask.width):
        raise DimensionMismatch(
            f"image {img.height}x{img.width} vs mask {mask.height}x{mask.width}"
        )
    if img.channels != 3:
        raise DimensionMismatch("attach_mask expects a 3-channel image")
    if normalizer is None:
        normalizer = diagonal_normalizer(img.height, img.width)
    if normalizer <= 0:
        raise DimensionMismatch("normalizer must be > 0")
    chan = (mask.values.astype(np.float64) / normalizer).astype(np.float32)
    return Image(np.concatenate([img.data, chan[:, :, None]], axis=2))
