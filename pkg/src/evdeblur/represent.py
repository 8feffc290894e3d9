"""Event voxel representations (SCER, SBT, Stack), the event mask and
mask-gated feature mixing.

Interval membership is decided in exact integer arithmetic: with
``u = 2N * (t - t_start)`` an event lies at or after sample ``i`` iff
``u >= i * T``, so no boundary is lost to floating-point rounding.
"""
from __future__ import annotations

import numpy as np

from .core import EventMask, EventStream, ScerGrid, VoxelGrid


def _accumulate(stream: EventStream, weights_mask: np.ndarray) -> np.ndarray:
    out = np.zeros(stream.height * stream.width)
    idx = stream.y[weights_mask] * stream.width + stream.x[weights_mask]
    np.add.at(out, idx, stream.p[weights_mask].astype(np.float64))
    return out.reshape(stream.height, stream.width)


def _check_window(stream: EventStream) -> None:
    if stream.duration <= 0:
        raise ValueError("stream window is empty")


def scer(stream: EventStream, n: int = 3) -> ScerGrid:
    """Symmetric cumulative event representation with ``2n`` channels.

    Channel ``k < n`` is minus the polarity sum over ``[t_k, f]`` and channel
    ``k >= n`` is the sum over ``(f, t_{k+1}]``, where ``t_i`` are the ``2n + 1``
    equally spaced sample instants and ``f = t_n`` is the midpoint. Sample
    instants are inclusive; an event exactly at ``f`` is already reflected in
    the middle frame and belongs to the earlier half only, so the last channel
    minus the first is the total polarity.
    """
    if n < 1:
        raise ValueError("N must be >= 1")
    _check_window(stream)
    T = stream.duration
    u = (stream.t - stream.t_start) * (2 * n)
    mid = n * T
    channels = []
    for k in range(n):
        channels.append(-_accumulate(stream, (u >= k * T) & (u <= mid)))
    for k in range(n, 2 * n):
        channels.append(_accumulate(stream, (u > mid) & (u <= (k + 1) * T)))
    return ScerGrid(np.stack(channels))


def sbt(stream: EventStream, bins: int = 6) -> VoxelGrid:
    """Polarity histogram over ``bins`` equal half-open intervals; the last
    bin also takes events at ``t_end``."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    _check_window(stream)
    b = ((stream.t - stream.t_start) * bins) // stream.duration
    b = np.minimum(b, bins - 1)
    out = np.zeros((bins, stream.height, stream.width))
    np.add.at(out, (b, stream.y, stream.x), stream.p.astype(np.float64))
    return VoxelGrid(out)


def stack(stream: EventStream) -> VoxelGrid:
    """Single channel holding each pixel's total polarity."""
    return VoxelGrid(_accumulate(stream, np.ones(len(stream), dtype=bool))[None])


def scer_from_sbt(grid: VoxelGrid) -> ScerGrid:
    """Cumulative sums of a ``2N``-bin SBT grid, arranged like :func:`scer`.

    Agrees with ``scer`` exactly unless an event sits on an interior bin
    boundary, where the two disagree on which side it falls.
    """
    if grid.channels % 2:
        raise ValueError("SBT grid needs an even number of bins")
    n = grid.channels // 2
    v = grid.values
    left = -np.cumsum(v[:n][::-1], axis=0)[::-1]
    right = np.cumsum(v[n:], axis=0)
    return ScerGrid(np.concatenate([left, right]))


def event_mask(grid: ScerGrid) -> EventMask:
    """0 where the first or last SCER channel saw any event, else 1.

    Magnitudes are summed so opposite-signed counts cannot cancel.
    """
    v = grid.values
    active = (np.abs(v[0]) + np.abs(v[-1])) > 0
    return EventMask((~active).astype(np.uint8))


def downsample_mask(mask: EventMask, factor: int) -> EventMask:
    """Nearest-neighbour subsampling for coarser feature levels."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    return EventMask(mask.m[::factor, ::factor])


def _as_features(a) -> np.ndarray:
    return a.values if isinstance(a, VoxelGrid) else np.asarray(a, dtype=np.float64)


def emgc_gates(enc, dec, mask: EventMask) -> tuple[np.ndarray, np.ndarray]:
    """Gated terms: encoder kept where the mask is 1, decoder where it is 0."""
    e, d = _as_features(enc), _as_features(dec)
    if e.shape != d.shape:
        raise ValueError(f"encoder {e.shape} and decoder {d.shape} features differ")
    if e.shape[-2:] != mask.shape:
        raise ValueError(f"mask {mask.shape} does not match features {e.shape[-2:]}")
    m = mask.m.astype(np.float64)
    return e * m, d * (1.0 - m)


def emgc_combine(enc, dec, mask: EventMask, skip: bool = True) -> VoxelGrid:
    """Mask-gated mix of encoder and decoder features plus skip paths.

    ``enc * m + dec * (1 - m) + enc + dec``; with ``skip=False`` only the gated
    terms are summed.
    """
    ge, gd = emgc_gates(enc, dec, mask)
    out = ge + gd
    if skip:
        out = out + _as_features(enc) + _as_features(dec)
    return VoxelGrid(out)
