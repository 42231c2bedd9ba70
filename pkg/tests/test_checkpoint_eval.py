"""Checkpoint round-trips, clip evaluation and inference, and the CLI."""

import numpy as np
import pytest

from dnln.checkpoint import (
    config_from_lines,
    config_to_text,
    load_checkpoint,
    load_into_model,
    load_model,
    save_checkpoint,
)
from dnln.cli import main
from dnln.evaluate import eval_clip, eval_root, infer, mean_psnr_over_sequences, summarize, write_report_csv
from dnln.image import Frame, write_frame
from dnln.metrics import EvalProtocol
from dnln.model import ModelConfig, build_model, named_parameters
from dnln.training import synth_dataset


def _tiny_model(seed=0, **overrides):
    cfg = ModelConfig.preset("desk", channels=4, n_res=1, n_dconv=1, n_rrdb=1, growth=2, **overrides)
    return build_model(cfg, seed=seed)


def _write_clip(tmp_path, name, count=6, size=24, seed=0):
    rng = np.random.default_rng(seed)
    clip = tmp_path / name
    clip.mkdir(parents=True)
    for i in range(count):
        write_frame(clip / f"frame_{i:08d}.png", Frame.from_array(rng.random((3, size, size))))
    return clip


class TestCheckpoint:
    def test_save_load_save_byte_identical(self, tmp_path):
        model = _tiny_model(seed=3)
        a = tmp_path / "a"
        b = tmp_path / "b"
        save_checkpoint(a, model.config, named_parameters(model))
        config, tensors = load_checkpoint(a)
        save_checkpoint(b, config, tensors)
        assert (a / "manifest.txt").read_bytes() == (b / "manifest.txt").read_bytes()
        assert (a / "tensors.blob").read_bytes() == (b / "tensors.blob").read_bytes()

    def test_values_roundtrip_exactly(self, tmp_path):
        model = _tiny_model(seed=4)
        save_checkpoint(tmp_path / "c", model.config, named_parameters(model))
        loaded = load_model(tmp_path / "c")
        assert loaded.config == model.config
        for name, p in named_parameters(model).items():
            assert np.array_equal(p.data, named_parameters(loaded)[name].data)

    def test_each_parameter_name_once(self, tmp_path):
        model = _tiny_model(seed=5)
        save_checkpoint(tmp_path / "c", model.config, named_parameters(model))
        lines = (tmp_path / "c" / "manifest.txt").read_text().splitlines()
        names = [ln.split()[0] for ln in lines[lines.index("[tensors]") + 1 :] if ln.strip()]
        assert len(names) == len(set(names)) == len(named_parameters(model))

    def test_name_mismatch_rejected(self, tmp_path):
        model = _tiny_model(seed=6)
        save_checkpoint(tmp_path / "c", model.config, named_parameters(model))
        _, tensors = load_checkpoint(tmp_path / "c")
        other = _tiny_model(seed=7, use_hffb=False)
        with pytest.raises(ValueError, match="mismatch"):
            load_into_model(other, tensors)

    def test_missing_checkpoint_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "nope")

    def test_config_text_roundtrip(self):
        cfg = ModelConfig.preset("desk", use_hffb=False, n_dconv=4)
        assert config_from_lines(config_to_text(cfg).splitlines()) == cfg

    def test_config_file_roundtrip(self, tmp_path):
        from dnln.checkpoint import read_config_file, write_config_file

        cfg = ModelConfig.preset("desk", n_radius=2)
        write_config_file(tmp_path / "model.cfg", cfg)
        assert read_config_file(tmp_path / "model.cfg") == cfg


class TestEvalClip:
    def test_bicubic_scoring_counts_and_averages(self, tmp_path):
        clip = _write_clip(tmp_path, "city", count=7, size=24)
        report = eval_clip(None, clip, EvalProtocol())
        assert len(report.scores) == 3  # 7 frames minus 2 at each end
        assert report.avg_psnr == pytest.approx(
            sum(s.psnr for s in report.scores) / 3
        )
        assert all(np.isfinite(s.ssim) for s in report.scores)

    def test_precomputed_mirror(self, tmp_path):
        root = tmp_path / "set"
        clip = _write_clip(root, "walk", count=6, size=24)
        mirror = tmp_path / "set_lr" / "walk"
        mirror.mkdir(parents=True)
        from dnln.evaluate import degrade_clip
        from dnln.image import load_clip

        for i, f in enumerate(degrade_clip(load_clip(clip))):
            write_frame(mirror / f"frame_{i:08d}.png", f)
        on = eval_clip(None, clip, degrade="on")
        pre = eval_clip(None, clip, degrade="precomputed")
        # same pipeline modulo the mirror's 8-bit quantization
        assert abs(on.avg_psnr - pre.avg_psnr) < 1.0

    def test_missing_mirror_rejected(self, tmp_path):
        clip = _write_clip(tmp_path / "root", "c1")
        with pytest.raises(FileNotFoundError, match="mirror"):
            eval_clip(None, clip, degrade="precomputed")

    def test_short_clip_rejected(self, tmp_path):
        clip = _write_clip(tmp_path, "tiny", count=4)
        with pytest.raises(ValueError, match="short"):
            eval_clip(None, clip)

    def test_root_reports_in_name_order(self, tmp_path):
        root = tmp_path / "root"
        _write_clip(root, "b_clip", count=5, seed=1)
        _write_clip(root, "a_clip", count=5, seed=2)
        reports = eval_root(None, root)
        assert [r.clip for r in reports] == ["a_clip", "b_clip"]
        text = summarize(reports)
        assert "Average" in text and "a_clip" in text

    def test_csv_report(self, tmp_path):
        clip = _write_clip(tmp_path, "csvclip", count=5)
        reports = [eval_clip(None, clip)]
        out = tmp_path / "report.csv"
        write_report_csv(out, reports)
        lines = out.read_text().splitlines()
        assert lines[0] == "clip,frame,psnr,ssim"
        assert len(lines) == 1 + 1 + 1  # header + one scored frame + average

    def test_model_predictor_on_synthetic(self):
        model = _tiny_model(seed=8)
        seqs = synth_dataset(2, 1, texture_seed=20, n_radius=1, hr_size=16)
        val = mean_psnr_over_sequences(model, seqs)
        assert np.isfinite(val)


class TestInfer:
    def test_frame_count_extents_and_determinism(self, tmp_path):
        clip = _write_clip(tmp_path, "src", count=3, size=12)
        out1 = tmp_path / "out1"
        out2 = tmp_path / "out2"
        written = infer(None, clip, out1)
        assert len(written) == 3
        from dnln.image import read_frame

        up = read_frame(written[0])
        assert up.pixels.data.shape == (3, 48, 48)
        infer(None, clip, out2)
        for p1 in sorted(out1.glob("*.png")):
            p2 = out2 / p1.name
            assert p1.read_bytes() == p2.read_bytes()

    def test_model_inference_writes_files(self, tmp_path):
        model = _tiny_model(seed=9)
        clip = _write_clip(tmp_path, "src2", count=3, size=8)
        out = tmp_path / "sr"
        written = infer(model, clip, out)
        assert len(written) == 3
        assert all(p.exists() for p in written)

    def test_empty_clip_rejected(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(FileNotFoundError):
            infer(None, tmp_path / "empty", tmp_path / "out")


class TestCli:
    def test_gradcheck_conv2d_exits_zero(self, capsys):
        assert main(["gradcheck", "conv2d", "--seed", "1"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_train_synthetic_smoke(self, tmp_path, capsys):
        rc = main([
            "train", "--synthetic", "--preset", "desk", "--steps", "2", "--batch", "2",
            "--seed", "3", "--out", str(tmp_path / "run"), "--synth-count", "2",
            "--synth-hr-size", "16", "--synth-shift", "1",
        ])
        assert rc == 0
        assert (tmp_path / "run" / "ckpt_final" / "manifest.txt").is_file()
        assert (tmp_path / "run" / "trace.csv").read_text().startswith("step,epoch,lr,loss")

    def test_eval_bicubic_and_infer(self, tmp_path, capsys):
        clip = _write_clip(tmp_path / "data", "clipA", count=5, size=24)
        assert main(["eval", "--data", str(tmp_path / "data"), "--bicubic",
                     "--out", str(tmp_path / "rep.csv")]) == 0
        assert (tmp_path / "rep.csv").is_file()
        assert main(["infer", "--data", str(clip), "--out", str(tmp_path / "sr")]) == 0
        assert len(list((tmp_path / "sr").glob("*.png"))) == 5

    def test_degrade_mirror(self, tmp_path):
        root = tmp_path / "hr"
        _write_clip(root, "clipB", count=3, size=16)
        assert main(["degrade", "--data", str(root)]) == 0
        mirror = tmp_path / "hr_lr" / "clipB"
        assert len(list(mirror.glob("*.png"))) == 3
        from dnln.image import read_frame

        lr = read_frame(sorted(mirror.glob("*.png"))[0])
        assert lr.pixels.data.shape == (3, 4, 4)

    def test_io_error_exit_code(self, tmp_path):
        assert main(["eval", "--data", str(tmp_path / "missing"), "--bicubic"]) == 2

    def test_validation_error_exit_code(self, tmp_path):
        clip = _write_clip(tmp_path, "shorty", count=3)
        assert main(["eval", "--data", str(clip), "--bicubic"]) == 1

    def test_train_on_clip_directory(self, tmp_path):
        root = tmp_path / "clips"
        _write_clip(root, "clipC", count=3, size=32)
        rc = main([
            "train", "--data", str(root), "--preset", "desk", "--steps", "1",
            "--batch", "2", "--seed", "6", "--out", str(tmp_path / "run"),
            "--patch", "6", "--no-augment",
        ])
        assert rc == 0
        assert (tmp_path / "run" / "ckpt_final" / "tensors.blob").is_file()

    def test_train_resume(self, tmp_path):
        rc = main([
            "train", "--synthetic", "--preset", "desk", "--steps", "1", "--batch", "1",
            "--seed", "4", "--out", str(tmp_path / "r1"), "--synth-count", "1",
            "--synth-hr-size", "16", "--synth-shift", "1",
        ])
        assert rc == 0
        rc = main([
            "train", "--synthetic", "--steps", "1", "--batch", "1", "--seed", "5",
            "--resume", str(tmp_path / "r1" / "ckpt_final"), "--out", str(tmp_path / "r2"),
            "--synth-count", "1", "--synth-hr-size", "16", "--synth-shift", "1",
        ])
        assert rc == 0
