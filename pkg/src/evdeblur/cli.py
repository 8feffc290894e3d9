"""Command-line front end.

Exit codes: 0 success, 1 a stage failed, 2 usage or configuration error.
Machine-readable results are printed as JSON lines on stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, io
from .attention import grad_check, init_params
from .config import ConfigError, parse_config, require_paths
from .core import IntensityImage, ScerGrid, ThresholdMap
from .edi import EdiConfig, edi_deblur, edi_sequence
from .metrics import evaluate
from .pipeline import StageError, load_sequence, run_pipeline, sim_config
from .represent import downsample_mask, event_mask, sbt, scer, stack
from .simulate import augment_voxels, sample_thresholds, simulate_events, synthesize_blur

logger = logging.getLogger("evdeblur")

# flags that feed the layered configuration (dest -> config key)
CONFIG_FLAGS = {
    "frames": "frames", "out_dir": "out_dir", "n": "n", "mu_c": "mu_c", "sigma_c": "sigma_c",
    "eps": "eps", "seed": "seed", "c": "c", "oracle_c": "oracle_c", "t0": "t0", "t1": "t1",
    "hot_pixels": "hot_pixels", "noise_std": "noise_std", "hot_value": "hot_value", "clamp": "clamp",
}


def _add_sim_flags(p):
    p.add_argument("--frames", help="glob of PGM/PFG frames, sorted lexicographically")
    p.add_argument("--t0", type=int, help="exposure start in microseconds (default 0)")
    p.add_argument("--t1", type=int, help="exposure end in microseconds (default 60000)")
    p.add_argument("--eps", type=float, help="log-domain offset (default 1e-3)")


def _add_aug_flags(p):
    p.add_argument("--hot-pixels", type=int, help="number of hot pixels to plant")
    p.add_argument("--noise-std", type=float, help="stddev of additive voxel noise")
    p.add_argument("--hot-value", type=float, help="voxel value of a hot pixel (default 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evdeblur", allow_abbrev=False,
                                     description="Event-based motion deblurring toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="TOML config file (also EVBLUR_CONFIG)")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", help="generate events from latent frames", allow_abbrev=False)
    _add_sim_flags(p)
    p.add_argument("--mu-c", type=float, help="threshold mean (default 0.2)")
    p.add_argument("--sigma-c", type=float, help="threshold stddev (default 0.03)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="events file (.evt1 or .csv)")
    p.add_argument("--thresholds", help="write the sampled threshold map (PFG1)")

    p = sub.add_parser("blur", help="average frames into a blurry image", allow_abbrev=False)
    p.add_argument("--frames", help="glob of frames")
    p.add_argument("--out", required=True)

    p = sub.add_parser("scer", help="build an event voxel grid", allow_abbrev=False)
    p.add_argument("--events", required=True)
    p.add_argument("--n", type=int, help="half-interval count N (default 3)")
    p.add_argument("--kind", choices=("scer", "sbt", "stack"), default="scer")
    p.add_argument("--augment", action="store_true", help="apply voxel noise and hot pixels")
    p.add_argument("--seed", type=int)
    _add_aug_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("mask", help="binary event mask from an SCER grid", allow_abbrev=False)
    p.add_argument("--scer", required=True)
    p.add_argument("--downsample", type=int, default=1, help="nearest-neighbour factor")
    p.add_argument("--out", required=True)

    p = sub.add_parser("edi", help="recover the sharp middle frame", allow_abbrev=False)
    p.add_argument("--blur", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--c", type=float, help="contrast threshold for inversion (default 0.2)")
    p.add_argument("--thresholds", help="per-pixel threshold map (PFG1) instead of --c")
    p.add_argument("--no-clamp", dest="clamp", action="store_const", const=False)
    p.add_argument("--out", required=True)
    p.add_argument("--sequence", help="directory for all 2N+1 latent frames")

    p = sub.add_parser("eval", help="PSNR/SSIM report", allow_abbrev=False)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--baseline-psnr", type=float)
    p.add_argument("--baseline-ssim", type=float)

    p = sub.add_parser("attn-check", help="finite-difference check of the attention block",
                       allow_abbrev=False)
    p.add_argument("--h", type=int, default=4)
    p.add_argument("--w", type=int, default=4)
    p.add_argument("--C", dest="big_c", type=int, default=8)
    p.add_argument("--c", dest="small_c", type=int, default=4)
    p.add_argument("--ratio", type=int, default=2)
    p.add_argument("--heads", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--save-params", help="write the checked parameters (ARR1 container)")

    p = sub.add_parser("pipeline", help="run every stage end to end", allow_abbrev=False)
    _add_sim_flags(p)
    p.add_argument("--out-dir")
    p.add_argument("--n", type=int)
    p.add_argument("--mu-c", type=float)
    p.add_argument("--sigma-c", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--c", type=float, help="contrast threshold for inversion")
    p.add_argument("--oracle-c", action="store_const", const=True,
                   help="invert with the true per-pixel threshold map")
    p.add_argument("--no-clamp", dest="clamp", action="store_const", const=False)
    _add_aug_flags(p)
    return parser


def _config(args):
    flags = {CONFIG_FLAGS[k]: v for k, v in vars(args).items() if k in CONFIG_FLAGS}
    return parse_config(flags, config_file=args.config)


def _emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True))


def cmd_simulate(args):
    cfg = _config(args)
    require_paths(cfg, "frames")
    if cfg.sigma_c > 0 and cfg.seed is None:
        raise ConfigError("--seed is required when sigma_c > 0")
    seq = load_sequence(cfg.frames, cfg.t0, cfg.t1)
    h, w = seq.shape
    thr = sample_thresholds(w, h, sim_config(cfg))
    events = simulate_events(seq, thr, cfg.eps)
    io.write_events(events, args.out)
    if args.thresholds:
        io.write_array(thr.c, args.thresholds)
    _emit({"command": "simulate", "events": len(events), "width": w, "height": h})


def cmd_blur(args):
    cfg = _config(args)
    require_paths(cfg, "frames")
    seq = load_sequence(cfg.frames, cfg.t0, cfg.t1)
    io.write_image(synthesize_blur(seq), args.out)


def cmd_scer(args):
    cfg = _config(args)
    events = io.read_events(args.events)
    if args.kind == "scer":
        grid = scer(events, cfg.n)
    elif args.kind == "sbt":
        grid = sbt(events, 2 * cfg.n)
    else:
        grid = stack(events)
    if args.augment:
        if cfg.seed is None:
            raise ConfigError("--seed is required with --augment")
        grid = augment_voxels(grid, sim_config(cfg))
    io.write_voxels(grid, args.out)


def cmd_mask(args):
    grid = ScerGrid(io.read_voxels(args.scer).values)
    io.write_mask(downsample_mask(event_mask(grid), args.downsample), args.out)


def cmd_edi(args):
    cfg = _config(args)
    blur = io.read_image(args.blur)
    events = io.read_events(args.events)
    c = ThresholdMap(io.read_array(args.thresholds)) if args.thresholds else cfg.c
    config = EdiConfig(n=cfg.n, c=c, eps=cfg.eps, clamp=cfg.clamp)
    io.write_image(IntensityImage.clamped(edi_deblur(blur, events, config)), args.out)
    if args.sequence:
        outdir = Path(args.sequence)
        outdir.mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(edi_sequence(blur, events, config)):
            io.write_image(IntensityImage.clamped(frame), outdir / f"frame_{i:03d}.pgm")


def cmd_eval(args):
    report = evaluate(io.read_image(args.pred), io.read_image(args.gt),
                      args.baseline_psnr, args.baseline_ssim)
    _emit(report.to_dict())


def cmd_attn_check(args):
    params = init_params(args.big_c, args.small_c, args.ratio, seed=args.seed, heads=args.heads)
    report = grad_check(params, (args.h, args.w, args.big_c, args.small_c), args.tol,
                        args.seed, args.ratio, args.step)
    if args.save_params:
        io.write_arrays(params.arrays(), args.save_params)
    _emit(report.to_dict())
    return 0 if report.passed else 1


def cmd_pipeline(args):
    cfg = _config(args)
    require_paths(cfg, "frames", "out_dir")
    if cfg.stochastic and cfg.seed is None:
        raise ConfigError("--seed is required for random thresholds or augmentation")
    _emit(run_pipeline(cfg))


COMMANDS = {
    "simulate": cmd_simulate, "blur": cmd_blur, "scer": cmd_scer, "mask": cmd_mask,
    "edi": cmd_edi, "eval": cmd_eval, "attn-check": cmd_attn_check, "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args) or 0
    except ConfigError as exc:
        parser.error(str(exc))
    except StageError as exc:
        print(f"evdeblur: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"evdeblur: stage '{args.command}' failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
