"""PSNR/SSIM and the relative error-reduction figures used in benchmark tables."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import convolve2d

from .core import IntensityImage

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _pixels(a) -> np.ndarray:
    return a.pixels if isinstance(a, IntensityImage) else np.asarray(a, dtype=np.float64)


def _pair(a, b):
    a, b = _pixels(a), _pixels(b)
    if a.shape != b.shape:
        raise ValueError(f"image sizes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images; identical inputs give 99 dB."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim_map(a, b, data_range: float = 1.0) -> np.ndarray:
    a, b = _pair(a, b)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    win = gaussian_window()

    def filt(x):
        return convolve2d(x, win, mode="valid")

    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b) -> float:
    """Mean Gaussian-windowed SSIM over the fully-covered ('valid') region."""
    return float(ssim_map(a, b).mean())


def rmse_reduction(psnr_best: float, psnr_other: float) -> float:
    """Percent RMSE reduction of the best method relative to another, from PSNRs."""
    return 100.0 * (1.0 - 10.0 ** (-(psnr_best - psnr_other) / 20.0))


def dssim_reduction(ssim_best: float, ssim_other: float) -> float:
    """Percent DSSIM reduction, with DSSIM = (1 - SSIM) / 2."""
    if ssim_best > 1 or ssim_other > 1:
        raise ValueError("SSIM values cannot exceed 1")
    if ssim_other == 1:
        raise ZeroDivisionError("comparison method has zero DSSIM")
    return 100.0 * (1.0 - (1.0 - ssim_best) / (1.0 - ssim_other))


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    rmse_reduction: float | None = None
    dssim_reduction: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(pred, gt, baseline_psnr: float | None = None, baseline_ssim: float | None = None) -> MetricReport:
    """Scores for ``pred`` against ``gt``; reductions are versus the given baseline scores."""
    report = MetricReport(psnr(pred, gt), ssim(pred, gt))
    if baseline_psnr is not None:
        report.rmse_reduction = rmse_reduction(report.psnr, baseline_psnr)
    if baseline_ssim is not None:
        report.dssim_reduction = dssim_reduction(report.ssim, baseline_ssim)
    return report
