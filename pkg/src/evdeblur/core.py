"""Domain types shared by every stage: events, images, voxel grids, thresholds.

All containers wrap numpy arrays and are frozen after construction; the
underlying arrays are marked read-only so instances can be shared freely.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

DEFAULT_EPS = 1e-3


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class Event(NamedTuple):
    """One sensor event. ``t`` is in microseconds, ``p`` is -1 or +1."""

    t: int
    x: int
    y: int
    p: int


@dataclass(frozen=True, eq=False)
class EventStream:
    """Events over a pixel grid within the exposure window ``[t_start, t_end]``.

    Stored column-wise. Events are kept in canonical order: by ``t``, then
    ``y``, ``x``, ``p``. The constructor requires timestamps to be
    non-decreasing and canonicalizes tie order; use :meth:`from_unsorted`
    to build a stream from arbitrary order.
    """

    width: int
    height: int
    t_start: int
    t_end: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64).reshape(-1)
        x = np.asarray(self.x, dtype=np.int64).reshape(-1)
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        p = np.asarray(self.p, dtype=np.int64).reshape(-1)
        if not (len(t) == len(x) == len(y) == len(p)):
            raise ValueError("event columns have different lengths")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if self.width > 0xFFFF or self.height > 0xFFFF:
            raise ValueError("grid dimensions exceed 16-bit range")
        if self.t_start < 0 or self.t_end < self.t_start:
            raise ValueError(f"invalid window [{self.t_start}, {self.t_end}]")
        if len(t):
            if np.any((x < 0) | (x >= self.width) | (y < 0) | (y >= self.height)):
                raise ValueError("event coordinates out of bounds")
            if np.any((p != 1) & (p != -1)):
                raise ValueError("polarity must be -1 or +1")
            if t.min() < self.t_start or t.max() > self.t_end:
                raise ValueError("timestamp out of window")
            if np.any(np.diff(t) < 0):
                raise ValueError("timestamps are not sorted")
            order = np.lexsort((p, x, y, t))
            t, x, y, p = t[order], x[order], y[order], p[order]
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "p", _frozen(p.astype(np.int8)))

    @classmethod
    def from_unsorted(cls, width, height, t_start, t_end, t, x, y, p) -> "EventStream":
        t = np.asarray(t, dtype=np.int64).reshape(-1)
        order = np.argsort(t, kind="stable")
        return cls(width, height, t_start, t_end, t[order],
                   np.asarray(x).reshape(-1)[order], np.asarray(y).reshape(-1)[order],
                   np.asarray(p).reshape(-1)[order])

    @classmethod
    def from_events(cls, width, height, t_start, t_end, events: Iterable[Event]) -> "EventStream":
        rows = [tuple(e) for e in events]
        if not rows:
            return cls.empty(width, height, t_start, t_end)
        t, x, y, p = (np.array(col) for col in zip(*rows))
        return cls.from_unsorted(width, height, t_start, t_end, t, x, y, p)

    @classmethod
    def empty(cls, width, height, t_start, t_end) -> "EventStream":
        z = np.zeros(0, dtype=np.int64)
        return cls(width, height, t_start, t_end, z, z, z, z)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self):
        for row in zip(self.t.tolist(), self.x.tolist(), self.y.tolist(), self.p.tolist()):
            yield Event(*row)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            (self.width, self.height, self.t_start, self.t_end)
            == (other.width, other.height, other.t_start, other.t_end)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def flipped(self) -> "EventStream":
        """Same events with every polarity negated."""
        return EventStream(self.width, self.height, self.t_start, self.t_end,
                           self.t, self.x, self.y, -self.p.astype(np.int64))


@dataclass(frozen=True, eq=False)
class IntensityImage:
    """Single-channel linear intensity image with values in [0, 1].

    ``pixels`` has shape ``(height, width)``.
    """

    pixels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.pixels, dtype=np.float64)
        if a.ndim != 2 or a.size == 0:
            raise ValueError(f"expected a non-empty 2-D array, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("image contains non-finite values")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("image values outside [0, 1]; use IntensityImage.clamped")
        object.__setattr__(self, "pixels", _frozen(a))

    @classmethod
    def clamped(cls, a) -> "IntensityImage":
        return cls(np.clip(np.asarray(a, dtype=np.float64), 0.0, 1.0))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, IntensityImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Real-valued ``(channels, height, width)`` grid. Channels are outermost."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3 or v.shape[0] < 1 or v.shape[1] < 1 or v.shape[2] < 1:
            raise ValueError(f"expected (K, H, W) with K >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("voxel grid contains non-finite values")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return np.array_equal(self.values, other.values)


class ScerGrid(VoxelGrid):
    """Symmetric cumulative grid with ``2N`` channels.

    Channel ``k < N`` holds the (negated) polarity sum from sample ``k`` up to
    the midpoint; channel ``k >= N`` holds the sum from the midpoint up to
    sample ``k + 1``. The all-zero midpoint channel is not stored.
    """

    def __post_init__(self):
        super().__post_init__()
        if self.channels % 2:
            raise ValueError("SCER grids need an even channel count")

    @property
    def n(self) -> int:
        return self.channels // 2

    def with_midpoint(self) -> np.ndarray:
        """All ``2N + 1`` cumulative sums, zero channel re-inserted at index N."""
        v = self.values
        zero = np.zeros((1,) + v.shape[1:])
        return np.concatenate([v[: self.n], zero, v[self.n:]])


@dataclass(frozen=True, eq=False)
class ThresholdMap:
    """Per-pixel positive contrast thresholds, shape ``(height, width)``."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        if c.ndim != 2 or c.size == 0:
            raise ValueError(f"expected a non-empty 2-D array, got shape {c.shape}")
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise ValueError("thresholds must be finite and positive")
        object.__setattr__(self, "c", _frozen(c))

    @classmethod
    def constant(cls, width: int, height: int, c: float) -> "ThresholdMap":
        return cls(np.full((height, width), float(c)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.c.shape

    @property
    def width(self) -> int:
        return self.c.shape[1]

    @property
    def height(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True, eq=False)
class EventMask:
    """Binary mask: 0 where events occurred, 1 elsewhere."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m)
        if m.ndim != 2:
            raise ValueError("mask must be 2-D")
        if np.any((m != 0) & (m != 1)):
            raise ValueError("mask must be binary")
        object.__setattr__(self, "m", _frozen(m.astype(np.uint8)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.m.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventMask):
            return NotImplemented
        return np.array_equal(self.m, other.m)


def log_intensity(image, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Per-pixel ``ln(I + eps)``; the domain in which events are triggered."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    pixels = image.pixels if isinstance(image, IntensityImage) else np.asarray(image, dtype=np.float64)
    return np.log(pixels + eps)
