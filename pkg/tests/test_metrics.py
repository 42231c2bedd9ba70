"""PSNR/SSIM fixtures and the clip-scoring protocol."""

import math

import numpy as np
import pytest

from dnln.image import Frame
from dnln.metrics import EvalProtocol, psnr_y, ssim_y


def _gray(value, h=32, w=32):
    return Frame.from_array(np.full((3, h, w), value))


class TestPsnrY:
    def test_identical_frames_infinite(self):
        rng = np.random.default_rng(0)
        f = Frame.from_array(rng.random((3, 8, 8)))
        assert psnr_y(f, Frame.from_array(f.pixels.data.copy())) == float("inf")

    def test_uniform_y_difference_of_ten(self):
        # gray levels differing by 10/219 give a luminance gap of exactly 10
        a = _gray(0.4)
        b = _gray(0.4 + 10.0 / 219.0)
        expected = 10.0 * math.log10(255.0**2 / 100.0)
        got = psnr_y(a, b)
        assert abs(got - expected) < 1e-9
        assert abs(got - 28.13) < 0.01

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            psnr_y(_gray(0.5, 8, 8), _gray(0.5, 8, 9))

    def test_border_crop_changes_region(self):
        rng = np.random.default_rng(1)
        base = rng.random((3, 32, 32))
        noisy = base.copy()
        noisy[:, :8, :] = rng.random((3, 8, 32))  # corrupt only the top band
        a, b = Frame.from_array(base), Frame.from_array(noisy)
        assert psnr_y(a, b, EvalProtocol(border_crop=8)) > psnr_y(a, b)

    def test_oversized_border_rejected(self):
        with pytest.raises(ValueError, match="border"):
            psnr_y(_gray(0.1, 8, 8), _gray(0.2, 8, 8), EvalProtocol(border_crop=4))


class TestSsimY:
    def test_identical_frames_exactly_one(self):
        rng = np.random.default_rng(2)
        f = Frame.from_array(rng.random((3, 16, 16)))
        assert ssim_y(f, Frame.from_array(f.pixels.data.copy())) == 1.0

    def test_inverted_nonconstant_below_one(self):
        rng = np.random.default_rng(3)
        base = rng.random((3, 16, 16))
        inverted = 1.0 - base
        assert ssim_y(Frame.from_array(base), Frame.from_array(inverted)) < 1.0

    def test_window_too_large_rejected(self):
        with pytest.raises(ValueError, match="window"):
            ssim_y(_gray(0.1, 8, 8), _gray(0.2, 8, 8))

    def test_score_in_valid_range(self):
        rng = np.random.default_rng(4)
        a = Frame.from_array(rng.random((3, 20, 20)))
        b = Frame.from_array(rng.random((3, 20, 20)))
        s = ssim_y(a, b)
        assert -1.0 <= s <= 1.0

    def test_small_noise_close_to_one(self):
        rng = np.random.default_rng(5)
        base = rng.random((3, 24, 24)) * 0.8 + 0.1
        noisy = np.clip(base + rng.normal(0, 1e-3, base.shape), 0, 1)
        assert ssim_y(Frame.from_array(base), Frame.from_array(noisy)) > 0.99


class TestEvalProtocol:
    def test_scored_indices_31_frames(self):
        proto = EvalProtocol()
        idx = proto.scored_indices(31)
        assert len(idx) == 27
        assert idx[0] == 2 and idx[-1] == 28

    def test_default_crop_is_zero(self):
        proto = EvalProtocol()
        assert proto.border_crop == 0
        assert proto.exclude_boundary_frames == 2

    def test_short_clip_scores_nothing(self):
        assert EvalProtocol().scored_indices(4) == []
