"""Frame ingestion, cubic resampling, color conversion, augmentation and
temporal windowing.

Pixels live in [0,1] as float64 (3,H,W) tensors; 8-bit image files are
normalized by /255 on ingestion and re-quantized only when written back.
Every pipeline stage clamps its output to [0,1]. All functions here are pure:
frames are never mutated in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor import Tensor

CUBIC_A = -0.5  # kernel coefficient of the antialiased resize convention


@dataclass
class Frame:
    pixels: Tensor  # (3, H, W) in [0,1]
    color_space: str = "rgb"

    def __post_init__(self):
        if self.pixels.data.ndim != 3 or self.pixels.data.shape[0] != 3:
            raise ValueError(f"Frame pixels must be (3,H,W), got {self.pixels.data.shape}")
        if self.color_space not in ("rgb", "ycbcr"):
            raise ValueError(f"unknown color space {self.color_space!r}")

    @property
    def height(self) -> int:
        return self.pixels.data.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.data.shape[2]

    @classmethod
    def from_array(cls, arr, color_space: str = "rgb") -> "Frame":
        return cls(Tensor(np.clip(arr, 0.0, 1.0)), color_space)


@dataclass
class FrameSequence:
    """2N+1 consecutive LR frames centered on the reference (index N),
    optionally paired with the reference's HR ground truth."""

    lr_frames: list
    hr_target: Frame | None
    n_radius: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.lr_frames) != 2 * self.n_radius + 1:
            raise ValueError(
                f"expected {2 * self.n_radius + 1} LR frames, got {len(self.lr_frames)}"
            )
        shape = self.lr_frames[0].pixels.data.shape
        for f in self.lr_frames:
            if f.pixels.data.shape != shape:
                raise ValueError("LR frames differ in shape")
        if self.hr_target is not None:
            hh, ww = self.hr_target.height, self.hr_target.width
            if hh % shape[1] != 0 or ww % shape[2] != 0 or hh // shape[1] != ww // shape[2]:
                raise ValueError(
                    f"HR target {hh}x{ww} is not an integer multiple of LR {shape[1]}x{shape[2]}"
                )

    @property
    def center(self) -> Frame:
        return self.lr_frames[self.n_radius]

    @property
    def scale(self) -> int:
        if self.hr_target is None:
            raise ValueError("sequence carries no HR target")
        return self.hr_target.height // self.lr_frames[0].height


def cubic_kernel(x, a: float = CUBIC_A):
    """Piecewise-cubic interpolation kernel with support (-2, 2)."""
    ax = np.abs(np.asarray(x, dtype=np.float64))
    ax2 = ax * ax
    ax3 = ax2 * ax
    inner = (a + 2) * ax3 - (a + 3) * ax2 + 1
    outer = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, inner, np.where(ax < 2, outer, 0.0))


def _resample_weights(in_size: int, out_size: int, scale: float, antialias: bool):
    """Per-output-pixel source indices and normalized weights for one axis.

    When downscaling with antialias the kernel is stretched by 1/scale and
    re-normalized; border samples are replicated via index clamping.
    """
    kscale = scale if (antialias and scale < 1.0) else 1.0
    support = 2.0 / kscale
    u = (np.arange(out_size, dtype=np.float64) + 0.5) / scale - 0.5
    left = np.floor(u - support).astype(np.int64) + 1
    taps = int(np.ceil(2 * support)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    wts = cubic_kernel((u[:, None] - idx) * kscale) * kscale
    wts /= wts.sum(axis=1, keepdims=True)
    return np.clip(idx, 0, in_size - 1), wts


def _resize_last_axis(a: np.ndarray, out_size: int, scale: float, antialias: bool):
    idx, wts = _resample_weights(a.shape[-1], out_size, scale, antialias)
    return np.einsum("...op,op->...o", a[..., idx], wts)


def resize_array(arr: np.ndarray, scale: float) -> np.ndarray:
    """Separable cubic resampling of (..., H, W) by a positive factor."""
    if scale <= 0:
        raise ValueError(f"resize scale must be positive, got {scale}")
    antialias = scale < 1.0
    out_h = int(np.ceil(arr.shape[-2] * scale))
    out_w = int(np.ceil(arr.shape[-1] * scale))
    out = _resize_last_axis(arr.swapaxes(-1, -2), out_h, scale, antialias).swapaxes(-1, -2)
    return _resize_last_axis(out, out_w, scale, antialias)


def cubic_resize(img: Frame, scale: float) -> Frame:
    return Frame.from_array(resize_array(img.pixels.data, scale), img.color_space)


def rgb_to_y(img: Frame) -> Tensor:
    """Studio-swing luminance on the 0-255 scale: Y = 65.481R + 128.553G + 24.966B + 16."""
    if img.color_space != "rgb":
        raise ValueError(f"rgb_to_y expects an RGB frame, got {img.color_space}")
    p = img.pixels.data
    if p.shape[0] != 3:
        raise ValueError(f"rgb_to_y expects 3 channels, got {p.shape[0]}")
    y = 65.481 * p[0] + 128.553 * p[1] + 24.966 * p[2] + 16.0
    return Tensor(y[None])


def _apply_geometric(arr: np.ndarray, op, scale: int) -> np.ndarray:
    if op == "hflip":
        return arr[:, :, ::-1]
    if op == "vflip":
        return arr[:, ::-1, :]
    if op == "rot90":
        return np.rot90(arr, axes=(1, 2))
    if isinstance(op, tuple) and op[0] == "crop":
        _, x, y, w, h = op
        x, y, w, h = (v * scale for v in (x, y, w, h))
        if x < 0 or y < 0 or w <= 0 or h <= 0 or y + h > arr.shape[1] or x + w > arr.shape[2]:
            raise ValueError(
                f"crop ({x},{y},{w},{h}) outside {arr.shape[2]}x{arr.shape[1]} frame"
            )
        return arr[:, y : y + h, x : x + w]
    raise ValueError(f"unknown augmentation op {op!r}")


def augment(seq: FrameSequence, ops) -> FrameSequence:
    """Apply geometric ops ('hflip', 'vflip', 'rot90', ('crop', x, y, w, h))
    jointly to all LR frames and, with crop coordinates scaled by the SR
    factor, to the HR target."""
    scale = seq.scale if seq.hr_target is not None else 1

    def transform(frame: Frame, factor: int) -> Frame:
        arr = frame.pixels.data
        for op in ops:
            arr = _apply_geometric(arr, op, factor)
        return Frame.from_array(np.ascontiguousarray(arr), frame.color_space)

    return FrameSequence(
        [transform(f, 1) for f in seq.lr_frames],
        transform(seq.hr_target, scale) if seq.hr_target is not None else None,
        seq.n_radius,
        dict(seq.meta),
    )


def window_clip(frames, n_radius: int, hr_frames=None) -> list:
    """One 2N+1 window per clip position; indices past either end replicate
    the nearest existing frame."""
    if not frames:
        raise ValueError("window_clip: empty clip")
    if hr_frames is not None and len(hr_frames) != len(frames):
        raise ValueError("window_clip: HR/LR frame counts differ")
    length = len(frames)
    windows = []
    for t in range(length):
        picks = [frames[min(max(i, 0), length - 1)] for i in range(t - n_radius, t + n_radius + 1)]
        target = hr_frames[t] if hr_frames is not None else None
        windows.append(FrameSequence(picks, target, n_radius, {"index": t}))
    return windows


def read_frame(path) -> Frame:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return Frame.from_array(arr.transpose(2, 0, 1))


def write_frame(path, frame: Frame) -> None:
    from PIL import Image

    data = np.clip(frame.pixels.data, 0.0, 1.0)
    arr = np.rint(data * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path)


def load_clip(clip_dir) -> list:
    """Frames of one clip directory, ordered by zero-padded filename."""
    clip_dir = Path(clip_dir)
    paths = sorted(clip_dir.glob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no .png frames found in {clip_dir}")
    return [read_frame(p) for p in paths]
