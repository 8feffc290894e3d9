import math
from fractions import Fraction

import numpy as np
import pytest

from evdeblur.core import EventStream
from evdeblur.simulate import FrameSequence


def random_stream(rng, max_side=64, max_events=500, boundary_free_n=None, window=None):
    """Random stream on a random grid. With ``boundary_free_n`` set, no event
    falls on an interior boundary of the 2N-interval partition."""
    w = int(rng.integers(1, max_side + 1))
    h = int(rng.integers(1, max_side + 1))
    if window is None:
        t0 = int(rng.integers(0, 1000))
        t1 = t0 + int(rng.integers(1, 5000))
    else:
        t0, t1 = window
    count = int(rng.integers(0, max_events + 1))
    # bias some timestamps onto partition boundaries so closed intervals matter
    t = rng.integers(t0, t1 + 1, size=count)
    if count:
        n_ = int(rng.integers(1, 4))
        marks = t0 + (np.arange(2 * n_ + 1) * (t1 - t0)) // (2 * n_)
        pick = rng.random(count) < 0.2
        t[pick] = rng.choice(marks, size=int(pick.sum()))
    if boundary_free_n is not None:
        T = t1 - t0
        u = (t - t0) * 2 * boundary_free_n
        interior = (u % T == 0) & (u > 0) & (u < 2 * boundary_free_n * T)
        t = t[~interior]
    count = len(t)
    x = rng.integers(0, w, size=count)
    y = rng.integers(0, h, size=count)
    p = rng.choice([-1, 1], size=count)
    return EventStream.from_unsorted(w, h, t0, t1, t, x, y, p)


def brute_scer(stream, n):
    """Direct evaluation of the symmetric cumulative sums: for each sample
    index i != N, rescan every event and test membership of the interval
    between the sample instant and the midpoint f (the sample end inclusive,
    f counted only for i < N). Bounds are exact rationals."""
    T = Fraction(stream.t_end - stream.t_start)
    f = stream.t_start + T / 2
    events = list(stream)
    out = np.zeros((2 * n, stream.height, stream.width))
    for i in range(2 * n + 1):
        if i == n:
            continue
        ti = f + (T / 2) * (Fraction(i, n) - 1)
        if i < n:
            lo, hi = math.ceil(ti), math.floor(f)
        else:
            lo, hi = math.floor(f) + 1, math.floor(ti)
        sign = 1 if i > n else -1
        ch = i if i < n else i - 1
        for t, x, y, p in events:
            if lo <= t <= hi:
                out[ch, y, x] += sign * p
    return out


def brute_sbt(stream, bins):
    T = Fraction(stream.t_end - stream.t_start)
    events = list(stream)
    out = np.zeros((bins, stream.height, stream.width))
    for b in range(bins):
        lo = math.ceil(stream.t_start + T * b / bins)
        hi = stream.t_start + T * (b + 1) / bins
        for t, x, y, p in events:
            if lo <= t < hi or (b == bins - 1 and t == stream.t_end):
                out[b, y, x] += p
    return out


def moving_square_sequence(t0=0, t1=60000):
    """128x128 scene: 32x32 smoothly textured square moving 12 px right over
    7 frames on a flat background."""
    size = 32
    yy, xx = np.mgrid[0:size, 0:size] / size
    texture = 0.45 + 0.3 * xx + 0.1 * np.sin(2 * np.pi * yy) * np.cos(np.pi * xx)
    frames = []
    for k in range(7):
        img = np.full((128, 128), 0.25)
        img[48:48 + size, 40 + 2 * k: 40 + 2 * k + size] = texture
        frames.append(img)
    return FrameSequence.uniform(frames, t0, t1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
