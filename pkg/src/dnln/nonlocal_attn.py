"""Embedded-Gaussian non-local block.

Every output position of the aligned neighbor feature is augmented with a
softmax-weighted sum over all positions of the reference feature, i.e. a
full (N_pos x N_pos) attention matrix between two feature maps. Memory is
O(N_pos^2); evaluation is therefore capped at MAX_POSITIONS spatial
positions and callers must tile larger inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ops import ConvKernel, conv2d, matmul, reshape, softmax_axis, transpose2d
from .tensor import Tensor

MAX_POSITIONS = 4096  # 64x64 map -> 16M-entry attention matrix (~128 MB)


@dataclass
class NonLocalWeights:
    """Four 1x1 projections: u embeds the query map, v and g embed the
    reference map, z maps the attended values back to feature width."""

    u: ConvKernel
    v: ConvKernel
    g: ConvKernel
    z: ConvKernel

    def __post_init__(self):
        embed = self.u.out_channels
        if self.v.out_channels != embed or self.g.out_channels != embed:
            raise ValueError("u/v/g embeddings must share output width")
        if self.z.in_channels != embed:
            raise ValueError("z must consume the embedding width")
        if self.z.out_channels != self.u.in_channels:
            raise ValueError("z must restore the input feature width")

    @classmethod
    def fan_in(cls, rng, channels: int, embed: int | None = None) -> "NonLocalWeights":
        embed = channels // 2 if embed is None else embed
        return cls(
            u=ConvKernel.fan_in(rng, channels, embed, 1),
            v=ConvKernel.fan_in(rng, channels, embed, 1),
            g=ConvKernel.fan_in(rng, channels, embed, 1),
            z=ConvKernel.fan_in(rng, embed, channels, 1),
        )


def nonlocal_forward(x: Tensor, y: Tensor, w: NonLocalWeights) -> Tensor:
    """z_p = x_p + W_z sum_n softmax_n(<W_u x_p, W_v y_n>) (W_g y_n)."""
    if x.data.shape != y.data.shape:
        raise ValueError(f"nonlocal_forward: shape mismatch {x.data.shape} vs {y.data.shape}")
    c, h, wd = x.data.shape
    n_pos = h * wd
    if n_pos > MAX_POSITIONS:
        raise ValueError(
            f"nonlocal_forward: {n_pos} positions exceeds cap {MAX_POSITIONS}; "
            "the attention matrix is O(N^2) - evaluate on smaller patches"
        )
    embed = w.u.out_channels
    um = reshape(conv2d(x, w.u), (embed, n_pos))
    vm = reshape(conv2d(y, w.v), (embed, n_pos))
    gm = reshape(conv2d(y, w.g), (embed, n_pos))
    logits = matmul(transpose2d(um), vm)  # (n_pos, n_pos), row p scores all n
    attn = softmax_axis(logits, axis=1)
    val = matmul(gm, transpose2d(attn))  # (embed, n_pos): val[:,p] = sum_n attn[p,n] g[:,n]
    return x + conv2d(reshape(val, (embed, h, wd)), w.z)
