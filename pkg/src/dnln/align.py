"""Feature-level alignment via cascaded modulated deformable convolution.

Each stage predicts a per-pixel sampling field (tap offsets plus modulation
scalars in (0,1)) from the concatenated neighbor/reference features, routed
through a dilated-convolution fusion block to widen the receptive field, then
resamples the neighbor feature with it. The reference feature is read-only
throughout the cascade.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .ops import ConvKernel, concat_channels, conv2d, leaky_rectifier, sigmoid, slice_channels
from .tensor import NonFiniteValueError, Tensor, record

HFFB_BRANCHES = 8
LEAKY_SLOPE = 0.2


@dataclass
class SamplingField:
    """Per-output-pixel deformation: offsets (2K,H,W) holds (dy,dx) pairs per
    tap in pixel units, modulation (K,H,W) holds per-tap scalars in [0,1]."""

    offsets: Tensor
    modulation: Tensor

    def __post_init__(self):
        off, mod = self.offsets.data, self.modulation.data
        if off.ndim != 3 or mod.ndim != 3:
            raise ValueError("sampling field components must be (channels,H,W)")
        if off.shape[0] != 2 * mod.shape[0]:
            raise ValueError(
                f"offsets carry {off.shape[0]} channels, expected 2x modulation's {mod.shape[0]}"
            )
        if off.shape[1:] != mod.shape[1:]:
            raise ValueError("offset/modulation spatial extents differ")
        if not np.all(np.isfinite(off)):
            raise NonFiniteValueError("offsets must be finite")

    @property
    def tap_count(self) -> int:
        return self.modulation.data.shape[0]


@dataclass
class HFFBParams:
    """Eight parallel 3x3 convolutions with dilation rates 1..8 whose outputs
    are cumulatively summed, concatenated, and fused back by 1x1 conv."""

    branch_kernels: list
    fuse_kernel: ConvKernel

    def __post_init__(self):
        if len(self.branch_kernels) != HFFB_BRANCHES:
            raise ValueError(f"expected {HFFB_BRANCHES} branches, got {len(self.branch_kernels)}")
        for r, k in enumerate(self.branch_kernels, start=1):
            if k.dilation != r:
                raise ValueError(f"branch {r} has dilation {k.dilation}, expected {r}")

    @classmethod
    def fan_in(cls, rng, channels: int, branch_channels: int) -> "HFFBParams":
        branches = [
            ConvKernel.fan_in(rng, channels, branch_channels, 3, dilation=r)
            for r in range(1, HFFB_BRANCHES + 1)
        ]
        fuse = ConvKernel.fan_in(rng, branch_channels * HFFB_BRANCHES, channels, 1)
        return cls(branches, fuse)


@dataclass
class AlignStage:
    """One deformable-convolution stage: parameter predictor (reduce conv ->
    HFFB or plain mid conv -> head conv emitting 2K+K channels) plus the
    deformable kernel itself."""

    reduce: ConvKernel
    hffb: HFFBParams | None
    mid: ConvKernel | None
    head: ConvKernel
    deform_kernel: ConvKernel

    def __post_init__(self):
        if (self.hffb is None) == (self.mid is None):
            raise ValueError("stage needs exactly one of hffb / mid conv")
        k = self.deform_kernel.tap_count
        if self.head.out_channels != 3 * k:
            raise ValueError(
                f"head emits {self.head.out_channels} channels, expected 3K={3 * k}"
            )

    @classmethod
    def fan_in(cls, rng, channels: int, branch_channels: int, use_hffb: bool = True) -> "AlignStage":
        reduce = ConvKernel.fan_in(rng, 2 * channels, channels, 3)
        hffb = HFFBParams.fan_in(rng, channels, branch_channels) if use_hffb else None
        mid = None if use_hffb else ConvKernel.fan_in(rng, channels, channels, 3)
        deform = ConvKernel.fan_in(rng, channels, channels, 3)
        # Zero-init head: training starts at offsets 0, modulation 0.5,
        # i.e. near the plain-convolution regime.
        head = ConvKernel.zeros(channels, 3 * deform.tap_count, 3)
        return cls(reduce, hffb, mid, head, deform)


def deform_conv(feat: Tensor, field: SamplingField, kernel: ConvKernel) -> Tensor:
    """Modulated deformable convolution: every kernel tap samples the input
    at its grid position displaced by the predicted offset (bilinear for
    fractional positions, zero outside the map) and is scaled by the
    predicted modulation before the usual weighted sum."""
    if feat.data.ndim != 3:
        raise ValueError(f"deform_conv: input must be (C,H,W), got {feat.data.shape}")
    if feat.data.shape[0] != kernel.in_channels:
        raise ValueError(
            f"deform_conv: input has {feat.data.shape[0]} channels, kernel expects {kernel.in_channels}"
        )
    if field.tap_count != kernel.tap_count:
        raise ValueError(
            f"deform_conv: field has {field.tap_count} taps, kernel has {kernel.tap_count}"
        )
    if field.offsets.data.shape[1:] != feat.data.shape[1:]:
        raise ValueError("deform_conv: field extents do not match feature extents")

    off, mod = field.offsets, field.modulation
    w, b = kernel.weights, kernel.bias
    out = Tensor(kernels.deform_conv_forward(feat.data, off.data, mod.data, w.data, b.data))

    def rule(g):
        gx, goff, gmod, gw, gb = kernels.deform_conv_backward(
            feat.data, off.data, mod.data, w.data, g
        )
        feat.accumulate_grad(gx)
        off.accumulate_grad(goff)
        mod.accumulate_grad(gmod)
        w.accumulate_grad(gw)
        b.accumulate_grad(gb)

    return record(out, (feat, off, mod, w, b), "deform_conv", rule)


def hffb_forward(x: Tensor, params: HFFBParams) -> Tensor:
    """Dilated branches d_1..d_8, hierarchical sums s_r = d_1 + ... + d_r,
    concat, 1x1 fuse, residual add."""
    sums = []
    running = None
    for k in params.branch_kernels:
        d = leaky_rectifier(conv2d(x, k), LEAKY_SLOPE)
        running = d if running is None else running + d
        sums.append(running)
    fused = conv2d(concat_channels(sums), params.fuse_kernel)
    return x + fused


def predict_field(f_i: Tensor, f_t: Tensor, stage: AlignStage) -> SamplingField:
    """Deformable sampling parameters from the (neighbor, reference) pair."""
    if f_i.data.shape != f_t.data.shape:
        raise ValueError(f"predict_field: shape mismatch {f_i.data.shape} vs {f_t.data.shape}")
    h = leaky_rectifier(conv2d(concat_channels([f_i, f_t]), stage.reduce), LEAKY_SLOPE)
    if stage.hffb is not None:
        h = hffb_forward(h, stage.hffb)
    else:
        h = leaky_rectifier(conv2d(h, stage.mid), LEAKY_SLOPE)
    raw = conv2d(h, stage.head)
    k = stage.deform_kernel.tap_count
    offsets = slice_channels(raw, 0, 2 * k)
    modulation = sigmoid(slice_channels(raw, 2 * k, 3 * k))
    return SamplingField(offsets, modulation)


def align_cascade(f_i: Tensor, f_t: Tensor, stages) -> Tensor:
    """Repeatedly warp the neighbor feature toward the reference; the
    reference feature is read-only and the original is fed to every stage."""
    if not stages:
        raise ValueError("align_cascade: empty stage list")
    f = f_i
    for stage in stages:
        f = deform_conv(f, predict_field(f, f_t, stage), stage.deform_kernel)
    return f
