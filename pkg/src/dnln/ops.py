"""Differentiable primitive operators.

Every network block in the package is composed from the functions here.
Ops validate shapes eagerly and raise ValueError on mismatch; gradients are
registered through tensor.record so untracked data flows stay tape-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .tensor import NonFiniteValueError, Tensor, as_tensor, record


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)

    def rule(g):
        a.accumulate_grad(g)
        b.accumulate_grad(g)

    return record(out, (a, b), "add", rule)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)

    def rule(g):
        a.accumulate_grad(g)
        b.accumulate_grad(-g)

    return record(out, (a, b), "sub", rule)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)

    def rule(g):
        a.accumulate_grad(g * b.data)
        b.accumulate_grad(g * a.data)

    return record(out, (a, b), "mul", rule)


def scale(x, s: float) -> Tensor:
    x = as_tensor(x)
    s = float(s)
    out = Tensor(x.data * s)

    def rule(g):
        x.accumulate_grad(g * s)

    return record(out, (x,), "scale", rule)


def leaky_rectifier(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.where(x.data >= 0, x.data, slope * x.data))

    def rule(g):
        x.accumulate_grad(g * np.where(x.data >= 0, 1.0, slope))

    return record(out, (x,), "leaky_rectifier", rule)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    d = x.data
    s = np.empty_like(d)
    pos = d >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    s[~pos] = e / (1.0 + e)
    out = Tensor(s)

    def rule(g):
        x.accumulate_grad(g * s * (1.0 - s))

    return record(out, (x,), "sigmoid", rule)


def concat_channels(tensors) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat_channels: empty input list")
    tail = ts[0].data.shape[1:]
    for t in ts[1:]:
        if t.data.shape[1:] != tail:
            raise ValueError(
                f"concat_channels: trailing shape mismatch {t.data.shape} vs {ts[0].data.shape}"
            )
    out = Tensor(np.concatenate([t.data for t in ts], axis=0))
    bounds = np.cumsum([0] + [t.data.shape[0] for t in ts])

    def rule(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            t.accumulate_grad(g[lo:hi])

    return record(out, tuple(ts), "concat_channels", rule)


def slice_channels(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    if not (0 <= start < stop <= x.data.shape[0]):
        raise ValueError(f"slice_channels: range [{start}:{stop}) outside {x.data.shape[0]} channels")
    out = Tensor(x.data[start:stop].copy())

    def rule(g):
        gx = np.zeros_like(x.data)
        gx[start:stop] = g
        x.accumulate_grad(gx)

    return record(out, (x,), "slice_channels", rule)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def rule(g):
        a.accumulate_grad(g @ b.data.T)
        b.accumulate_grad(a.data.T @ g)

    return record(out, (a, b), "matmul", rule)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.reshape(shape).copy())

    def rule(g):
        x.accumulate_grad(g.reshape(x.data.shape))

    return record(out, (x,), "reshape", rule)


def transpose2d(x) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ValueError(f"transpose2d: expected rank 2, got shape {x.data.shape}")
    out = Tensor(x.data.T.copy())

    def rule(g):
        x.accumulate_grad(g.T)

    return record(out, (x,), "transpose2d", rule)


def mean(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.mean(x.data))

    def rule(g):
        x.accumulate_grad(np.full_like(x.data, float(g) / x.data.size))

    return record(out, (x,), "mean", rule)


def abs_mean(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.mean(np.abs(x.data)))

    def rule(g):
        x.accumulate_grad(np.sign(x.data) * (float(g) / x.data.size))

    return record(out, (x,), "abs_mean", rule)


def sq_mean(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.mean(x.data * x.data))

    def rule(g):
        x.accumulate_grad(x.data * (2.0 * float(g) / x.data.size))

    return record(out, (x,), "sq_mean", rule)


def softmax_axis(x, axis: int) -> Tensor:
    x = as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise NonFiniteValueError("softmax_axis: non-finite input")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=axis, keepdims=True)
    out = Tensor(s)

    def rule(g):
        inner = np.sum(g * s, axis=axis, keepdims=True)
        x.accumulate_grad(s * (g - inner))

    return record(out, (x,), "softmax_axis", rule)


@dataclass
class ConvKernel:
    """Weights of a same-padded, stride-1 dilated convolution.

    padding is derived so spatial extent is preserved; kernel extents must
    be odd for that to be well-defined.
    """

    weights: Tensor
    bias: Tensor
    dilation: int = 1
    padding: int = field(init=False, default=0)

    def __post_init__(self):
        if self.weights.data.ndim != 4:
            raise ValueError(f"ConvKernel weights must be rank 4, got {self.weights.data.shape}")
        cout, cin, kh, kw = self.weights.data.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"ConvKernel extents must be odd for same padding, got {kh}x{kw}")
        if self.dilation < 1:
            raise ValueError(f"ConvKernel dilation must be positive, got {self.dilation}")
        if self.bias.data.shape != (cout,):
            raise ValueError(
                f"ConvKernel bias shape {self.bias.data.shape} does not match {cout} output channels"
            )
        self.padding = self.dilation * (kh - 1) // 2

    @property
    def in_channels(self) -> int:
        return self.weights.data.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights.data.shape[0]

    @property
    def tap_count(self) -> int:
        return self.weights.data.shape[2] * self.weights.data.shape[3]

    @classmethod
    def fan_in(cls, rng, in_ch: int, out_ch: int, ksize: int, dilation: int = 1, gain: float = 1.0):
        """Fan-in-scaled normal init, trainable."""
        std = gain * math.sqrt(2.0 / (in_ch * ksize * ksize))
        w = Tensor(rng.normal(0.0, std, size=(out_ch, in_ch, ksize, ksize)), requires_grad=True)
        b = Tensor(np.zeros(out_ch), requires_grad=True)
        return cls(w, b, dilation)

    @classmethod
    def zeros(cls, in_ch: int, out_ch: int, ksize: int, dilation: int = 1):
        w = Tensor(np.zeros((out_ch, in_ch, ksize, ksize)), requires_grad=True)
        b = Tensor(np.zeros(out_ch), requires_grad=True)
        return cls(w, b, dilation)


def conv2d(x, kernel: ConvKernel) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 3:
        raise ValueError(f"conv2d: input must be (C,H,W), got {x.data.shape}")
    if x.data.shape[0] != kernel.in_channels:
        raise ValueError(
            f"conv2d: input has {x.data.shape[0]} channels, kernel expects {kernel.in_channels}"
        )
    w, b = kernel.weights, kernel.bias
    out = Tensor(kernels.conv2d_forward(x.data, w.data, b.data, kernel.dilation))

    def rule(g):
        gx, gw, gb = kernels.conv2d_backward(x.data, w.data, g, kernel.dilation)
        x.accumulate_grad(gx)
        w.accumulate_grad(gw)
        b.accumulate_grad(gb)

    return record(out, (x, w, b), "conv2d", rule)


def pixel_shuffle(x, r: int) -> Tensor:
    """Re-index (C*r^2, H, W) into (C, H*r, W*r):
    out[c, h*r+dy, w*r+dx] = in[c*r^2 + dy*r + dx, h, w]."""
    x = as_tensor(x)
    if x.data.ndim != 3:
        raise ValueError(f"pixel_shuffle: input must be (C,H,W), got {x.data.shape}")
    cr2, h, w = x.data.shape
    if cr2 % (r * r) != 0:
        raise ValueError(f"pixel_shuffle: {cr2} channels not divisible by r^2={r * r}")
    c = cr2 // (r * r)
    out_data = (
        x.data.reshape(c, r, r, h, w).transpose(0, 3, 1, 4, 2).reshape(c, h * r, w * r)
    )
    out = Tensor(out_data)

    def rule(g):
        gx = g.reshape(c, h, r, w, r).transpose(0, 2, 4, 1, 3).reshape(cr2, h, w)
        x.accumulate_grad(np.ascontiguousarray(gx))

    return record(out, (x,), "pixel_shuffle", rule)


def pixel_unshuffle(x, r: int) -> Tensor:
    """Inverse re-indexing of pixel_shuffle."""
    x = as_tensor(x)
    c, hr, wr = x.data.shape
    if hr % r != 0 or wr % r != 0:
        raise ValueError(f"pixel_unshuffle: extents {hr}x{wr} not divisible by {r}")
    h, w = hr // r, wr // r
    out_data = x.data.reshape(c, h, r, w, r).transpose(0, 2, 4, 1, 3).reshape(c * r * r, h, w)
    out = Tensor(np.ascontiguousarray(out_data))

    def rule(g):
        gx = g.reshape(c, r, r, h, w).transpose(0, 3, 1, 4, 2).reshape(c, hr, wr)
        x.accumulate_grad(np.ascontiguousarray(gx))

    return record(out, (x,), "pixel_unshuffle", rule)


def bilinear_sample(feat, y, x) -> Tensor:
    """Bilinear read of a (C,H,W) map at one real-valued position.

    The four integer neighbors are blended with (1-|dy|)(1-|dx|) weights;
    neighbors outside [0,H-1]x[0,W-1] contribute zero. Differentiable in the
    map and, when passed as scalar tensors, in the coordinates.
    """
    feat = as_tensor(feat)
    if feat.data.ndim != 3:
        raise ValueError(f"bilinear_sample: feature map must be (C,H,W), got {feat.data.shape}")
    yt = y if isinstance(y, Tensor) else Tensor(float(y))
    xt = x if isinstance(x, Tensor) else Tensor(float(x))
    if yt.data.size != 1 or xt.data.size != 1:
        raise ValueError("bilinear_sample: coordinates must be scalars")
    sy = float(yt.data.reshape(-1)[0])
    sx = float(xt.data.reshape(-1)[0])
    if not (math.isfinite(sy) and math.isfinite(sx)):
        raise NonFiniteValueError(f"bilinear_sample: non-finite coordinates ({sy}, {sx})")

    c, h, w = feat.data.shape
    y0 = math.floor(sy)
    x0 = math.floor(sx)
    dy = sy - y0
    dx = sx - x0

    def corner(yy, xx):
        if 0 <= yy < h and 0 <= xx < w:
            return feat.data[:, yy, xx]
        return np.zeros(c)

    v00, v01 = corner(y0, x0), corner(y0, x0 + 1)
    v10, v11 = corner(y0 + 1, x0), corner(y0 + 1, x0 + 1)
    w00, w01 = (1 - dy) * (1 - dx), (1 - dy) * dx
    w10, w11 = dy * (1 - dx), dy * dx
    out = Tensor(w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11)

    def rule(g):
        gfeat = np.zeros_like(feat.data)
        for wt, yy, xx in ((w00, y0, x0), (w01, y0, x0 + 1), (w10, y0 + 1, x0), (w11, y0 + 1, x0 + 1)):
            if 0 <= yy < h and 0 <= xx < w:
                gfeat[:, yy, xx] += wt * g
        feat.accumulate_grad(gfeat)
        gy = float(np.dot(g, (v10 - v00) * (1 - dx) + (v11 - v01) * dx))
        gx = float(np.dot(g, (v01 - v00) * (1 - dy) + (v11 - v10) * dy))
        yt.accumulate_grad(np.full_like(yt.data, gy))
        xt.accumulate_grad(np.full_like(xt.data, gx))

    return record(out, (feat, yt, xt), "bilinear_sample", rule)
