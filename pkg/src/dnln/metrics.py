"""Luminance-channel PSNR/SSIM under the clip-scoring protocol.

Metrics run on the Y channel of the 0-255 scale in floating point, without
re-quantizing to 8 bits; third-decimal deltas against integer-Y toolchains
are expected. The protocol drops the first and last two frames of a clip
and optionally crops a pixel border before scoring.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .image import Frame, rgb_to_y

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 255.0


@dataclass
class EvalProtocol:
    exclude_boundary_frames: int = 2
    border_crop: int = 0  # 8 mimics methods that crop severe boundary effects

    def scored_indices(self, clip_length: int) -> list:
        lo = self.exclude_boundary_frames
        hi = clip_length - self.exclude_boundary_frames
        return list(range(lo, hi))


def _y_plane(frame: Frame, border: int) -> np.ndarray:
    y = rgb_to_y(frame).data[0]
    if border > 0:
        if 2 * border >= min(y.shape):
            raise ValueError(f"border crop {border} swallows a {y.shape} frame")
        y = y[border:-border, border:-border]
    return y


def psnr_y(pred: Frame, gt: Frame, proto: EvalProtocol | None = None) -> float:
    """10*log10(255^2 / MSE) on luminance; identical frames give inf."""
    proto = proto or EvalProtocol()
    if pred.pixels.data.shape != gt.pixels.data.shape:
        raise ValueError(
            f"psnr_y: shape mismatch {pred.pixels.data.shape} vs {gt.pixels.data.shape}"
        )
    a = _y_plane(pred, proto.border_crop)
    b = _y_plane(gt, proto.border_crop)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(DYNAMIC_RANGE**2 / mse)


def _gaussian_taps(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    c = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(c * c) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    out = sliding_window_view(img, len(taps), axis=0) @ taps
    return sliding_window_view(out, len(taps), axis=1) @ taps


def ssim_y(pred: Frame, gt: Frame, proto: EvalProtocol | None = None) -> float:
    """Mean local SSIM with an 11x11 Gaussian window (sigma 1.5) on luminance."""
    proto = proto or EvalProtocol()
    if pred.pixels.data.shape != gt.pixels.data.shape:
        raise ValueError(
            f"ssim_y: shape mismatch {pred.pixels.data.shape} vs {gt.pixels.data.shape}"
        )
    a = _y_plane(pred, proto.border_crop)
    b = _y_plane(gt, proto.border_crop)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"ssim_y: frame {a.shape} smaller than the {SSIM_WINDOW}px window")
    taps = _gaussian_taps()
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    mu_a = _filter_valid(a, taps)
    mu_b = _filter_valid(b, taps)
    var_a = _filter_valid(a * a, taps) - mu_a * mu_a
    var_b = _filter_valid(b * b, taps) - mu_b * mu_b
    cov = _filter_valid(a * b, taps) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
