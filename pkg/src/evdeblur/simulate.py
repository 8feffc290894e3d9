"""Event simulation, blur synthesis and voxel-level noise augmentation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DEFAULT_EPS, EventStream, IntensityImage, ThresholdMap, VoxelGrid, log_intensity

MIN_THRESHOLD = 0.01
# comparator slack in units of c; a return to an exact earlier level must fire
CROSSING_TOL = 1e-9


@dataclass(frozen=True)
class SimConfig:
    mu_c: float = 0.2
    sigma_c: float = 0.03
    eps: float = DEFAULT_EPS
    seed: int = 0
    hot_pixels: int = 0
    noise_std: float = 0.0
    hot_value: float = 10.0

    def __post_init__(self):
        if not self.mu_c > 0:
            raise ValueError("mu_c must be positive")
        if self.sigma_c < 0:
            raise ValueError("sigma_c must be non-negative")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.hot_pixels < 0:
            raise ValueError("hot_pixels must be non-negative")
        if self.noise_std < 0:
            raise ValueError("noise stddev must be non-negative")


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """Latent sharp frames sampled at uniformly spaced integer timestamps.

    Blur synthesis and EDI expect an odd count ``2N + 1`` with the middle
    frame at the exposure midpoint; event simulation accepts any count >= 2.
    """

    frames: tuple
    timestamps: tuple

    def __post_init__(self):
        frames = tuple(f if isinstance(f, IntensityImage) else IntensityImage(f) for f in self.frames)
        ts = tuple(int(t) for t in self.timestamps)
        if len(frames) < 2:
            raise ValueError("need at least two frames")
        if len(ts) != len(frames):
            raise ValueError("one timestamp per frame required")
        if any(f.shape != frames[0].shape for f in frames):
            raise ValueError("frames differ in size")
        steps = np.diff(ts)
        if np.any(steps <= 0):
            raise ValueError("timestamps must be strictly increasing")
        ideal = (ts[-1] - ts[0]) / (len(ts) - 1)
        if np.any(np.abs(np.asarray(ts) - (ts[0] + ideal * np.arange(len(ts)))) > 1.0):
            raise ValueError("timestamps are not uniformly spaced")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "timestamps", ts)

    @classmethod
    def uniform(cls, frames: Sequence, t_start: int, t_end: int) -> "FrameSequence":
        n = len(frames)
        if n < 2:
            raise ValueError("need at least two frames")
        ts = [t_start + round((t_end - t_start) * i / (n - 1)) for i in range(n)]
        return cls(tuple(frames), tuple(ts))

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].shape

    @property
    def t_start(self) -> int:
        return self.timestamps[0]

    @property
    def t_end(self) -> int:
        return self.timestamps[-1]

    @property
    def n(self) -> int:
        """Half-interval count N for a ``2N + 1`` frame sequence."""
        if len(self.frames) % 2 == 0:
            raise ValueError("sequence has an even frame count; no middle frame")
        return (len(self.frames) - 1) // 2

    @property
    def middle(self) -> IntensityImage:
        return self.frames[self.n]

    def stack(self) -> np.ndarray:
        return np.stack([f.pixels for f in self.frames])


def sample_thresholds(width: int, height: int, config: SimConfig = SimConfig()) -> ThresholdMap:
    if width < 1 or height < 1:
        raise ValueError("zero-sized threshold grid")
    rng = np.random.default_rng(config.seed)
    c = rng.normal(config.mu_c, config.sigma_c, size=(height, width))
    return ThresholdMap(np.maximum(c, MIN_THRESHOLD))


def simulate_events(seq: FrameSequence, thr: ThresholdMap | float, eps: float = DEFAULT_EPS) -> EventStream:
    """Threshold-crossing events for every pixel of ``seq``.

    Log intensity is interpolated linearly in time between frames. Whenever it
    reaches ``ref +/- c`` an event fires at the interpolated time (rounded to
    the nearest microsecond) and the reference moves by exactly ``+/- c``.
    """
    h, w = seq.shape
    if isinstance(thr, ThresholdMap):
        if thr.shape != (h, w):
            raise ValueError(f"threshold map {thr.shape} does not match frames {(h, w)}")
        c = thr.c.reshape(-1)
    else:
        if not thr > 0:
            raise ValueError("threshold must be positive")
        c = np.full(h * w, float(thr))

    logs = [log_intensity(f, eps).reshape(-1) for f in seq.frames]
    ref = logs[0].copy()
    pix = np.arange(h * w)
    chunks_t, chunks_pix, chunks_p = [], [], []

    for k in range(len(logs) - 1):
        a, b = logs[k], logs[k + 1]
        ta, tb = seq.timestamps[k], seq.timestamps[k + 1]
        up = b > a
        # within a monotone segment crossings only happen away from ``ref`` in
        # the direction of travel
        span = np.where(up, b - ref, ref - b) / c
        count = np.floor(span + CROSSING_TOL)
        count = np.maximum(count, 0).astype(np.int64)
        total = int(count.sum())
        if total:
            sel = np.repeat(pix, count)
            step = np.arange(total) - np.repeat(np.cumsum(count) - count, count) + 1
            sign = np.where(up[sel], 1.0, -1.0)
            level = ref[sel] + sign * step * c[sel]
            frac = (level - a[sel]) / (b[sel] - a[sel])
            t = np.floor(ta + frac * (tb - ta) + 0.5).astype(np.int64)
            chunks_t.append(np.clip(t, ta, tb))
            chunks_pix.append(sel)
            chunks_p.append(sign.astype(np.int64))
        ref = ref + np.where(up, 1.0, -1.0) * count * c

    if not chunks_t:
        return EventStream.empty(w, h, seq.t_start, seq.t_end)
    t = np.concatenate(chunks_t)
    sel = np.concatenate(chunks_pix)
    p = np.concatenate(chunks_p)
    return EventStream.from_unsorted(w, h, seq.t_start, seq.t_end, t, sel % w, sel // w, p)


def synthesize_blur(seq: FrameSequence) -> IntensityImage:
    """Blurry frame as the pixel-wise mean of the latent frames."""
    frames = seq.stack()
    # averaging offsets from the first frame keeps a static pixel bit-exact
    return IntensityImage.clamped(frames[0] + (frames - frames[0]).mean(axis=0))


def augment_voxels(grid: VoxelGrid, config: SimConfig = SimConfig(), seed: int | None = None) -> VoxelGrid:
    """Add Gaussian noise to every cell, then plant hot pixels.

    A hot pixel is set to ``config.hot_value`` in every channel.
    """
    if config.noise_std < 0:
        raise ValueError("noise stddev must be non-negative")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    v = np.array(grid.values)
    if config.noise_std > 0:
        v = v + rng.normal(0.0, config.noise_std, size=v.shape)
    if config.hot_pixels:
        k, h, w = v.shape
        if config.hot_pixels > h * w:
            raise ValueError("more hot pixels than pixels")
        idx = rng.choice(h * w, size=config.hot_pixels, replace=False)
        v[:, idx // w, idx % w] = config.hot_value
    return VoxelGrid(v)
