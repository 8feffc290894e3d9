"""End-to-end run: frames -> blur + events -> SCER + mask -> EDI -> report."""
from __future__ import annotations

import json
import logging
from pathlib import Path

from . import io
from .config import PipelineConfig, frame_paths, require_paths
from .core import IntensityImage, ThresholdMap
from .edi import EdiConfig, edi_deblur
from .metrics import dssim_reduction, evaluate, psnr, rmse_reduction, ssim
from .represent import event_mask, scer
from .simulate import FrameSequence, SimConfig, augment_voxels, sample_thresholds, simulate_events, synthesize_blur

logger = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        logger.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc


def sim_config(config: PipelineConfig) -> SimConfig:
    return SimConfig(mu_c=config.mu_c, sigma_c=config.sigma_c, eps=config.eps,
                     seed=config.seed if config.seed is not None else 0,
                     hot_pixels=config.hot_pixels, noise_std=config.noise_std,
                     hot_value=config.hot_value)


def load_sequence(pattern: str, t0: int, t1: int) -> FrameSequence:
    frames = [io.read_image(p) for p in frame_paths(pattern)]
    return FrameSequence.uniform(frames, t0, t1)


def run_pipeline(config: PipelineConfig) -> dict:
    """Run every stage, writing its artifact into ``config.out_dir``.

    Returns the report written to ``report.jsonl``. Any failure is re-raised
    as :class:`StageError` naming the stage.
    """
    with _Stage("config"):
        require_paths(config, "frames", "out_dir")
        config.validate()
        if config.stochastic and config.seed is None:
            raise ValueError("a seed is required for random thresholds or augmentation")
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        sim = sim_config(config)

    with _Stage("load"):
        seq = load_sequence(config.frames, config.t0, config.t1)
        middle = seq.middle
        h, w = seq.shape

    with _Stage("blur"):
        io.write_image(synthesize_blur(seq), out / "blur.pgm")
        # later stages consume the written artifact, so reruns from files agree
        blur = io.read_image(out / "blur.pgm")

    with _Stage("simulate"):
        thresholds = sample_thresholds(w, h, sim)
        io.write_array(thresholds.c, out / "thresholds.pfg")
        io.write_events(simulate_events(seq, thresholds, config.eps), out / "events.evt1")
        events = io.read_events(out / "events.evt1")

    with _Stage("scer"):
        grid = scer(events, config.n)
        io.write_voxels(grid, out / "scer.vox")
        if config.hot_pixels or config.noise_std:
            io.write_voxels(augment_voxels(grid, sim), out / "scer_aug.vox")

    with _Stage("mask"):
        io.write_mask(event_mask(grid), out / "mask.pgm")

    with _Stage("edi"):
        c = ThresholdMap(io.read_array(out / "thresholds.pfg")) if config.oracle_c else config.c
        sharp = edi_deblur(blur, events, EdiConfig(n=config.n, c=c, eps=config.eps, clamp=config.clamp))
        io.write_image(IntensityImage.clamped(sharp), out / "sharp.pgm")

    with _Stage("eval"):
        restored = io.read_image(out / "sharp.pgm")
        blur_psnr, blur_ssim = psnr(blur, middle), ssim(blur, middle)
        report = evaluate(restored, middle).to_dict()
        report["rmse_reduction"] = rmse_reduction(report["psnr"], blur_psnr)
        report["dssim_reduction"] = dssim_reduction(report["ssim"], blur_ssim) if blur_ssim < 1 else None
        report.update(blur_psnr=blur_psnr, blur_ssim=blur_ssim, events=len(events))
        (out / "report.jsonl").write_text(json.dumps(report, sort_keys=True) + "\n")
    return report
