"""Network assembly: shared feature extractor, per-neighbor alignment and
attention branches, fusion, dense residual trunk with global skip, and the
sub-pixel reconstruction head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .align import AlignStage, align_cascade
from .image import Frame, FrameSequence
from .nonlocal_attn import NonLocalWeights, nonlocal_forward
from .ops import ConvKernel, concat_channels, conv2d, leaky_rectifier, pixel_shuffle, scale as t_scale
from .tensor import Tensor

RRDB_BETA = 0.2
DENSE_CONVS = 5
DENSE_BLOCKS = 3
LEAKY_SLOPE = 0.2

_PRESETS = {
    "paper": dict(channels=64, n_res=5, n_dconv=5, n_rrdb=23, growth=32, n_radius=3, scale=4),
    "desk": dict(channels=8, n_res=1, n_dconv=2, n_rrdb=2, growth=8, n_radius=1, scale=4),
}

_CONFIG_FIELDS = ("channels", "n_res", "n_dconv", "n_rrdb", "growth", "n_radius", "scale", "use_hffb")


@dataclass
class ModelConfig:
    channels: int = 64
    n_res: int = 5
    n_dconv: int = 5
    n_rrdb: int = 23
    growth: int = 32
    n_radius: int = 3
    scale: int = 4
    use_hffb: bool = True

    def __post_init__(self):
        if self.scale != 4:
            raise ValueError(f"only the x4 reconstruction head is supported, got scale {self.scale}")
        if self.channels < 2 or self.n_dconv < 1 or self.n_rrdb < 0 or self.n_res < 0:
            raise ValueError("degenerate model configuration")
        if self.n_radius < 0:
            raise ValueError(f"temporal radius must be non-negative, got {self.n_radius}")

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelConfig":
        if name not in _PRESETS:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")
        cfg = dict(_PRESETS[name])
        cfg.update(overrides)
        return cls(**cfg)

    @property
    def n_frames(self) -> int:
        return 2 * self.n_radius + 1

    @property
    def hffb_branch_channels(self) -> int:
        return max(self.channels // 2, 1)

    @property
    def embed_channels(self) -> int:
        return max(self.channels // 2, 1)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in _CONFIG_FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        kwargs = {}
        for name in _CONFIG_FIELDS:
            raw = d[name]
            if name == "use_hffb":
                kwargs[name] = raw in (True, "true", "True", "1", 1)
            else:
                kwargs[name] = int(raw)
        return cls(**kwargs)


@dataclass
class Extractor:
    conv0: ConvKernel
    blocks: list  # [(conv1, conv2), ...] residual pairs


@dataclass
class RRDBParams:
    """Three densely connected 5-conv blocks nested in residual connections,
    each residual scaled by beta."""

    blocks: list  # [ [conv x5], [conv x5], [conv x5] ]
    beta: float = RRDB_BETA


@dataclass
class Model:
    config: ModelConfig
    extract: Extractor
    align_stages: list
    nl: NonLocalWeights
    fusion: ConvKernel
    rrdbs: list
    trunk_conv: ConvKernel
    up1: ConvKernel
    up2: ConvKernel
    head: ConvKernel
    _params: dict = field(default_factory=dict, repr=False)


def _dense_block(rng, channels: int, growth: int) -> list:
    convs = []
    for j in range(DENSE_CONVS - 1):
        convs.append(ConvKernel.fan_in(rng, channels + j * growth, growth, 3, gain=0.1))
    convs.append(ConvKernel.fan_in(rng, channels + (DENSE_CONVS - 1) * growth, channels, 3, gain=0.1))
    return convs


def build_model(config: ModelConfig, seed: int = 0) -> Model:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    c = config.channels

    extract = Extractor(
        conv0=ConvKernel.fan_in(rng, 3, c, 3),
        blocks=[
            (ConvKernel.fan_in(rng, c, c, 3), ConvKernel.fan_in(rng, c, c, 3))
            for _ in range(config.n_res)
        ],
    )
    stages = [
        AlignStage.fan_in(rng, c, config.hffb_branch_channels, use_hffb=config.use_hffb)
        for _ in range(config.n_dconv)
    ]
    nl = NonLocalWeights.fan_in(rng, c, config.embed_channels)
    fusion = ConvKernel.fan_in(rng, config.n_frames * c, c, 3)
    rrdbs = [
        RRDBParams([_dense_block(rng, c, config.growth) for _ in range(DENSE_BLOCKS)])
        for _ in range(config.n_rrdb)
    ]
    trunk_conv = ConvKernel.fan_in(rng, c, c, 3)
    up1 = ConvKernel.fan_in(rng, c, 4 * c, 3)
    up2 = ConvKernel.fan_in(rng, c, 4 * c, 3)
    # Small-gain head starting at mid-gray: the first optimizer steps refine
    # structure instead of fighting amplified init noise.
    head = ConvKernel.fan_in(rng, c, 3, 3, gain=0.1)
    head.bias.data[:] = 0.5

    model = Model(config, extract, stages, nl, fusion, rrdbs, trunk_conv, up1, up2, head)
    model._params = _collect_parameters(model)
    return model


def _kernel_entries(prefix: str, kernel: ConvKernel):
    yield f"{prefix}.weight", kernel.weights
    yield f"{prefix}.bias", kernel.bias


def _collect_parameters(model: Model) -> dict:
    entries = {}

    def put(prefix, kernel):
        for name, t in _kernel_entries(prefix, kernel):
            entries[name] = t

    put("extract.conv0", model.extract.conv0)
    for i, (c1, c2) in enumerate(model.extract.blocks, start=1):
        put(f"extract.res{i}.conv1", c1)
        put(f"extract.res{i}.conv2", c2)
    for k, stage in enumerate(model.align_stages, start=1):
        put(f"align.stage{k}.reduce", stage.reduce)
        if stage.hffb is not None:
            for r, branch in enumerate(stage.hffb.branch_kernels, start=1):
                put(f"align.stage{k}.hffb.branch{r}", branch)
            put(f"align.stage{k}.hffb.fuse", stage.hffb.fuse_kernel)
        else:
            put(f"align.stage{k}.mid", stage.mid)
        put(f"align.stage{k}.head", stage.head)
        put(f"align.stage{k}.deform", stage.deform_kernel)
    put("nonlocal.u", model.nl.u)
    put("nonlocal.v", model.nl.v)
    put("nonlocal.g", model.nl.g)
    put("nonlocal.z", model.nl.z)
    put("fusion", model.fusion)
    for k, rrdb in enumerate(model.rrdbs, start=1):
        for j, block in enumerate(rrdb.blocks, start=1):
            for i, conv in enumerate(block, start=1):
                put(f"trunk.rrdb{k}.db{j}.conv{i}", conv)
    put("trunk.conv", model.trunk_conv)
    put("up.1", model.up1)
    put("up.2", model.up2)
    put("head", model.head)
    return entries


def named_parameters(model: Model) -> dict:
    """Ordered name -> Tensor map; the order fixes checkpoint layout."""
    return model._params


def parameter_count(model: Model) -> int:
    return sum(t.data.size for t in model._params.values())


def extract_features(frame, extractor: Extractor) -> Tensor:
    """One conv plus residual blocks (conv-rectifier-conv + skip); the same
    weights serve every frame of a window."""
    x = frame.pixels if isinstance(frame, Frame) else frame
    x = conv2d(x, extractor.conv0)
    for c1, c2 in extractor.blocks:
        x = x + conv2d(leaky_rectifier(conv2d(x, c1), 0.0), c2)
    return x


def dense_forward(u: Tensor, convs: list, beta: float) -> Tensor:
    feats = [u]
    for conv in convs[:-1]:
        feats.append(leaky_rectifier(conv2d(concat_channels(feats), conv), LEAKY_SLOPE))
    out = conv2d(concat_channels(feats), convs[-1])
    return u + t_scale(out, beta)


def rrdb_forward(x: Tensor, p: RRDBParams) -> Tensor:
    t = x
    for block in p.blocks:
        t = dense_forward(t, block, p.beta)
    return x + t_scale(t, p.beta)


def forward(model: Model, seq: FrameSequence) -> Tensor:
    """Reconstruct the reference frame: returns an unclamped (3, H*4, W*4)
    tensor so losses see raw values; clamp at the image boundary."""
    cfg = model.config
    if seq.n_radius != cfg.n_radius:
        raise ValueError(
            f"sequence radius {seq.n_radius} does not match model radius {cfg.n_radius}"
        )
    feats = [extract_features(f, model.extract) for f in seq.lr_frames]
    f_t = feats[cfg.n_radius]

    branches = []
    for i, f_i in enumerate(feats):
        if i == cfg.n_radius:
            branches.append(f_t)
            continue
        aligned = align_cascade(f_i, f_t, model.align_stages)
        branches.append(nonlocal_forward(aligned, f_t, model.nl))

    fused = conv2d(concat_channels(branches), model.fusion)
    t = fused
    for rrdb in model.rrdbs:
        t = rrdb_forward(t, rrdb)
    t = conv2d(t, model.trunk_conv)
    t = t + f_t

    t = leaky_rectifier(pixel_shuffle(conv2d(t, model.up1), 2), LEAKY_SLOPE)
    t = leaky_rectifier(pixel_shuffle(conv2d(t, model.up2), 2), LEAKY_SLOPE)
    return conv2d(t, model.head)


def forward_frame(model: Model, seq: FrameSequence) -> Frame:
    return Frame.from_array(forward(model, seq).data)
