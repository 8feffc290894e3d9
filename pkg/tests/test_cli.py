import json
import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import moving_square_sequence
from evdeblur import __version__, io
from evdeblur.cli import main
from evdeblur.config import ConfigError, PipelineConfig, parse_config
from evdeblur.core import IntensityImage


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in list(os.environ):
        if key.startswith("EVBLUR_"):
            monkeypatch.delenv(key)


@pytest.fixture
def frames(tmp_path):
    d = tmp_path / "frames"
    d.mkdir()
    for i, f in enumerate(moving_square_sequence().frames):
        io.write_image(f, d / f"f{i:02d}.pgm")
    return str(d / "*.pgm")


@pytest.fixture
def static_frames(tmp_path, rng):
    d = tmp_path / "static"
    d.mkdir()
    img = IntensityImage(np.round(rng.random((24, 24)) * 255) / 255)
    for i in range(7):
        io.write_image(img, d / f"s{i}.pgm")
    return str(d / "*.pgm"), img


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def last_json(text):
    return json.loads(text.strip().splitlines()[-1])


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({}, env={})
        assert (cfg.n, cfg.mu_c, cfg.sigma_c, cfg.eps, cfg.c) == (3, 0.2, 0.03, 1e-3, 0.2)

    def test_precedence(self, tmp_path):
        toml = tmp_path / "c.toml"
        toml.write_text("n = 1\nmu_c = 0.3\nsigma_c = 0.01\n")
        env = {"EVBLUR_MU_C": "0.4", "EVBLUR_SIGMA_C": "0.02"}
        cfg = parse_config({"sigma_c": 0.05, "seed": None}, env=env, config_file=toml)
        assert (cfg.n, cfg.mu_c, cfg.sigma_c, cfg.seed) == (1, 0.4, 0.05, None)

    def test_config_file_from_env(self, tmp_path):
        toml = tmp_path / "c.toml"
        toml.write_text("[evblur]\nclamp = false\n")
        assert parse_config({}, env={"EVBLUR_CONFIG": str(toml)}).clamp is False

    @pytest.mark.parametrize("text", ["n = 1.5\n", "bogus = 1\n", "n = [\n"])
    def test_bad_file(self, tmp_path, text):
        toml = tmp_path / "c.toml"
        toml.write_text(text)
        with pytest.raises(ConfigError):
            parse_config({}, env={}, config_file=toml)

    def test_bad_env(self):
        with pytest.raises(ConfigError):
            parse_config({}, env={"EVBLUR_N": "three"})
        with pytest.raises(ConfigError):
            parse_config({}, env={"EVBLUR_ORACLE_C": "maybe"})

    def test_validation(self):
        with pytest.raises(ConfigError):
            parse_config({"t0": 10, "t1": 5}, env={})
        assert PipelineConfig().stochastic and not PipelineConfig(sigma_c=0).stochastic


class TestBasics:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert __version__ in capsys.readouterr().out

    @pytest.mark.parametrize("cmd", ["simulate", "blur", "scer", "mask", "edi", "eval", "attn-check", "pipeline"])
    def test_help(self, capsys, cmd):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0
        assert "usage" in capsys.readouterr().out

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "evdeblur", "--version"],
                             capture_output=True, text=True, check=True)
        assert out.stdout.strip() == f"evdeblur {__version__}"

    @pytest.mark.parametrize("argv", [
        ["edi", "--blur", "b.pgm", "--events", "e.evt1", "--out", "o.pgm", "--n", "three"],
        ["frobnicate"],
        ["simulate", "--fram", "x", "--out", "y"],
        [],
    ])
    def test_usage_errors(self, capsys, argv):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2

    def test_bad_env_is_usage_error(self, capsys, monkeypatch, tmp_path):
        monkeypatch.setenv("EVBLUR_N", "x")
        with pytest.raises(SystemExit) as exc:
            main(["scer", "--events", str(tmp_path / "e.evt1"), "--out", str(tmp_path / "s.vox")])
        assert exc.value.code == 2


class TestSubcommands:
    def test_stage_by_stage(self, capsys, tmp_path, frames):
        ev, thr = tmp_path / "e.evt1", tmp_path / "thr.pfg"
        code, out, _ = run(capsys, "simulate", "--frames", frames, "--seed", 3, "--out", ev, "--thresholds", thr)
        assert code == 0
        rec = last_json(out)
        assert rec["events"] == len(io.read_events(ev)) > 0
        assert io.read_array(thr).shape == (128, 128)

        blur = tmp_path / "blur.pgm"
        assert run(capsys, "blur", "--frames", frames, "--out", blur)[0] == 0

        vox = tmp_path / "s.vox"
        assert run(capsys, "scer", "--events", ev, "--out", vox)[0] == 0
        assert io.read_voxels(vox).channels == 6
        for kind, k in (("sbt", 2), ("stack", 1)):
            assert run(capsys, "scer", "--events", ev, "--n", 1, "--kind", kind, "--out", vox)[0] == 0
            assert io.read_voxels(vox).channels == k
        aug = tmp_path / "a.vox"
        assert run(capsys, "scer", "--events", ev, "--augment", "--seed", 1, "--hot-pixels", 4,
                   "--out", aug)[0] == 0
        assert np.sum(np.all(io.read_voxels(aug).values == 10.0, axis=0)) == 4

        run(capsys, "scer", "--events", ev, "--out", vox)
        mask = tmp_path / "m.pgm"
        assert run(capsys, "mask", "--scer", vox, "--out", mask, "--downsample", 2)[0] == 0
        assert io.read_image(mask).shape == (64, 64)

        sharp, seqdir = tmp_path / "sharp.pgm", tmp_path / "seq"
        assert run(capsys, "edi", "--blur", blur, "--events", ev, "--thresholds", thr,
                   "--out", sharp, "--sequence", seqdir)[0] == 0
        assert len(list(seqdir.glob("*.pgm"))) == 7

        gt = tmp_path / "gt.pgm"
        io.write_image(moving_square_sequence().middle, gt)
        code, out, _ = run(capsys, "eval", "--pred", sharp, "--gt", gt, "--baseline-psnr", 20)
        rep = last_json(out)
        assert code == 0 and rep["psnr"] > 35 and rep["rmse_reduction"] > 0

    def test_csv_events(self, capsys, tmp_path, frames):
        ev = tmp_path / "e.csv"
        assert run(capsys, "simulate", "--frames", frames, "--sigma-c", 0, "--out", ev)[0] == 0
        assert io.read_events(ev).width == 128

    def test_simulate_needs_seed(self, capsys, tmp_path, frames):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--frames", frames, "--out", str(tmp_path / "e.evt1")])
        assert exc.value.code == 2

    def test_attn_check(self, capsys, tmp_path):
        params = tmp_path / "p.arr"
        code, out, _ = run(capsys, "attn-check", "--save-params", params)
        rep = last_json(out)
        assert code == 0 and rep["pass"] and rep["max_rel_err"] <= 1e-5
        assert set(io.read_arrays(params)) >= {"w_q", "w_k", "w_v"}

    def test_attn_check_failing_tolerance(self, capsys):
        code, out, _ = run(capsys, "attn-check", "--tol", 0)
        assert code == 1 and last_json(out)["pass"] is False

    def test_missing_input_fails_stage(self, capsys, tmp_path):
        code, _, err = run(capsys, "mask", "--scer", tmp_path / "nope.vox", "--out", tmp_path / "m.pgm")
        assert code == 1 and "mask" in err


class TestPipeline:
    def test_static_scene(self, capsys, tmp_path, static_frames):
        pattern, img = static_frames
        out = tmp_path / "run"
        code, stdout, _ = run(capsys, "pipeline", "--frames", pattern, "--out-dir", out, "--seed", 0)
        assert code == 0
        rep = last_json(stdout)
        assert rep["events"] == 0 and rep["psnr"] == 99.0
        assert io.read_image(out / "sharp.pgm") == io.read_image(out / "blur.pgm") == img
        assert rep == json.loads((out / "report.jsonl").read_text())

    def test_artifacts_and_determinism(self, capsys, tmp_path, frames):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert run(capsys, "pipeline", "--frames", frames, "--out-dir", d, "--seed", 5,
                       "--oracle-c", "--noise-std", 0.1)[0] == 0
        names = sorted(p.name for p in a.iterdir())
        assert names == ["blur.pgm", "events.evt1", "mask.pgm", "report.jsonl", "scer.vox",
                         "scer_aug.vox", "sharp.pgm", "thresholds.pfg"]
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_toml_config(self, capsys, tmp_path, static_frames):
        pattern, _ = static_frames
        cfg = tmp_path / "run.toml"
        cfg.write_text(f'frames = "{pattern}"\nout_dir = "{tmp_path / "t"}"\nsigma_c = 0.0\nn = 2\n')
        assert run(capsys, "--config", cfg, "pipeline")[0] == 0
        assert io.read_voxels(tmp_path / "t" / "scer.vox").channels == 4

    def test_stochastic_needs_seed(self, capsys, tmp_path, frames):
        with pytest.raises(SystemExit) as exc:
            main(["pipeline", "--frames", frames, "--out-dir", str(tmp_path / "x")])
        assert exc.value.code == 2

    def test_stage_failure(self, capsys, tmp_path):
        d = tmp_path / "bad"
        d.mkdir()
        (d / "f0.pgm").write_bytes(b"P5\n2 2\n255\n\x00")
        code, _, err = run(capsys, "pipeline", "--frames", d / "*.pgm", "--out-dir", tmp_path / "o",
                           "--sigma-c", 0)
        assert code == 1 and "stage 'load'" in err
