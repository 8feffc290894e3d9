"""Event-based double integral (EDI) inversion.

The blurry frame is the mean of ``2N + 1`` latent frames, and each latent
frame is the middle one scaled by ``exp(c * E_i)``, where ``E_i`` is the
signed polarity sum between the midpoint and sample ``i`` (the SCER channels
with a zero inserted at index N). Dividing the blur by the mean of those
factors recovers the middle frame.

Results are returned as raw float64 arrays: unclamped estimates may exceed 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_EPS, EventStream, IntensityImage, ThresholdMap, VoxelGrid
from .represent import scer


@dataclass(frozen=True)
class EdiConfig:
    n: int = 3
    c: float | ThresholdMap = 0.2
    eps: float = DEFAULT_EPS
    clamp: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("N must be >= 1")
        if not isinstance(self.c, ThresholdMap) and not self.c > 0:
            raise ValueError("contrast threshold must be positive")


def _threshold_array(c, shape) -> np.ndarray | float:
    if isinstance(c, ThresholdMap):
        if c.shape != shape:
            raise ValueError(f"threshold map {c.shape} does not match stream {shape}")
        return c.c
    if not c > 0:
        raise ValueError("contrast threshold must be positive")
    return float(c)


def _factors(stream: EventStream, n: int, c) -> np.ndarray:
    """``exp(c * E_i)`` for i = 0..2N, shape ``(2N + 1, H, W)``."""
    c = _threshold_array(c, stream.shape)
    return np.exp(c * scer(stream, n).with_midpoint())


def edi_denominator(stream: EventStream, n: int = 3, c=0.2) -> VoxelGrid:
    """Per-pixel ``sum_i exp(c * E_i)``; always >= 1 and equal to 2N+1 without events."""
    return VoxelGrid(_factors(stream, n, c).sum(axis=0)[None])


def _blur_array(blur, stream: EventStream) -> np.ndarray:
    b = blur.pixels if isinstance(blur, IntensityImage) else np.asarray(blur, dtype=np.float64)
    if b.shape != stream.shape:
        raise ValueError(f"blur {b.shape} and events {stream.shape} differ in size")
    return b


def edi_deblur(blur, stream: EventStream, config: EdiConfig = EdiConfig()) -> np.ndarray:
    """Latent sharp frame at the exposure midpoint."""
    b = _blur_array(blur, stream)
    d = _factors(stream, config.n, config.c).sum(axis=0)
    # scale first so an event-free pixel (d == 2N+1) is returned bit-exactly
    sharp = b * ((2 * config.n + 1) / d)
    return np.clip(sharp, 0.0, 1.0) if config.clamp else sharp


def edi_sequence(blur, stream: EventStream, config: EdiConfig = EdiConfig()) -> np.ndarray:
    """All ``2N + 1`` latent frames, shape ``(2N + 1, H, W)``.

    Unclamped, their mean reproduces ``blur`` up to rounding.
    """
    b = _blur_array(blur, stream)
    factors = _factors(stream, config.n, config.c)
    sharp = b * ((2 * config.n + 1) / factors.sum(axis=0))
    frames = sharp[None] * factors
    return np.clip(frames, 0.0, 1.0) if config.clamp else frames
