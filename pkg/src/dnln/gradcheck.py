"""Central finite-difference verification of analytic gradients.

Each check rebuilds a scalar loss from scratch around perturbed inputs
(eps=1e-5, float64) and compares element-wise against the recorded backward
pass: |analytic - numeric| <= tol * max(1, |analytic|, |numeric|).
Primitives are held to 1e-6; composite blocks and the sampling paths of the
deformable convolution to 1e-5, with offsets kept at least 0.1 away from
integer coordinates where the interpolant has kinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .align import AlignStage, SamplingField, deform_conv, predict_field
from .model import RRDBParams, _dense_block, rrdb_forward
from .nonlocal_attn import NonLocalWeights, nonlocal_forward
from .tensor import Tensor

EPS = 1e-5
PRIMITIVE_TOL = 1e-6
COMPOSITE_TOL = 1e-5


@dataclass
class CheckResult:
    name: str
    max_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_err < self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<40} max_err {self.max_err:.3e}  (tol {self.tol:.0e})"


def numeric_gradient(f, t: Tensor, eps: float = EPS) -> np.ndarray:
    grad = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f().item()
        flat[i] = orig - eps
        lo = f().item()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_function(name: str, f, wrt: dict, tol: float) -> list:
    """Compare backward() of f() against central differences for every
    tensor in wrt (name -> Tensor, each with requires_grad)."""
    for t in wrt.values():
        t.zero_grad()
    f().backward()
    results = []
    for label, t in wrt.items():
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        numeric = numeric_gradient(f, t)
        results.append(CheckResult(f"{name}.{label}", relative_error(analytic, numeric), tol))
    return results


def _offset_field(rng, taps: int, h: int, w: int, max_int: int = 1) -> np.ndarray:
    """Fractional offsets whose sample coordinates stay >=0.1 from integers."""
    base = rng.integers(-max_int, max_int + 1, size=(2 * taps, h, w)).astype(np.float64)
    frac = rng.uniform(0.15, 0.45, size=(2 * taps, h, w))
    sign = rng.choice([-1.0, 1.0], size=(2 * taps, h, w))
    return base + sign * frac


def check_primitives(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    results = []

    def t(shape, low=-1.0, high=1.0):
        return Tensor(rng.uniform(low, high, shape), requires_grad=True)

    a, b = t((2, 3, 4)), t((2, 3, 4))
    results += check_function("add", lambda: ops.sq_mean(ops.add(a, b)), {"a": a, "b": b}, PRIMITIVE_TOL)
    results += check_function("sub", lambda: ops.sq_mean(ops.sub(a, b)), {"a": a, "b": b}, PRIMITIVE_TOL)
    results += check_function("mul", lambda: ops.sq_mean(ops.mul(a, b)), {"a": a, "b": b}, PRIMITIVE_TOL)
    results += check_function("scale", lambda: ops.sq_mean(ops.scale(a, 1.7)), {"a": a}, PRIMITIVE_TOL)

    # keep activations away from their kink/tie points
    pos = Tensor(rng.uniform(0.2, 1.0, (3, 4)) * rng.choice([-1.0, 1.0], (3, 4)), requires_grad=True)
    results += check_function(
        "leaky_rectifier", lambda: ops.sq_mean(ops.leaky_rectifier(pos, 0.2)), {"x": pos}, PRIMITIVE_TOL
    )
    results += check_function(
        "abs_mean", lambda: ops.abs_mean(pos), {"x": pos}, PRIMITIVE_TOL
    )
    x = t((3, 4), -2.0, 2.0)
    results += check_function("sigmoid", lambda: ops.sq_mean(ops.sigmoid(x)), {"x": x}, PRIMITIVE_TOL)
    results += check_function("mean", lambda: ops.mean(ops.mul(x, x)), {"x": x}, PRIMITIVE_TOL)
    results += check_function("sq_mean", lambda: ops.sq_mean(x), {"x": x}, PRIMITIVE_TOL)
    results += check_function(
        "softmax_axis", lambda: ops.sq_mean(ops.softmax_axis(x, 1)), {"x": x}, PRIMITIVE_TOL
    )

    c1, c2 = t((2, 3, 3)), t((4, 3, 3))
    results += check_function(
        "concat_channels",
        lambda: ops.sq_mean(ops.concat_channels([c1, c2])),
        {"a": c1, "b": c2},
        PRIMITIVE_TOL,
    )
    results += check_function(
        "slice_channels", lambda: ops.sq_mean(ops.slice_channels(c2, 1, 3)), {"x": c2}, PRIMITIVE_TOL
    )

    m1, m2 = t((3, 4)), t((4, 2))
    results += check_function(
        "matmul", lambda: ops.sq_mean(ops.matmul(m1, m2)), {"a": m1, "b": m2}, PRIMITIVE_TOL
    )
    results += check_function(
        "reshape", lambda: ops.sq_mean(ops.reshape(m1, (2, 6))), {"x": m1}, PRIMITIVE_TOL
    )
    results += check_function(
        "transpose2d", lambda: ops.sq_mean(ops.transpose2d(m1)), {"x": m1}, PRIMITIVE_TOL
    )

    ps = t((8, 3, 3))
    results += check_function(
        "pixel_shuffle", lambda: ops.sq_mean(ops.pixel_shuffle(ps, 2)), {"x": ps}, PRIMITIVE_TOL
    )

    feat = t((3, 5, 5))
    yc = Tensor(np.array(2.3), requires_grad=True)
    xc = Tensor(np.array(1.7), requires_grad=True)
    results += check_function(
        "bilinear_sample",
        lambda: ops.sq_mean(ops.bilinear_sample(feat, yc, xc)),
        {"feat": feat, "y": yc, "x": xc},
        PRIMITIVE_TOL,
    )
    return results


def check_conv2d(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    results = []
    for dilation in (1, 2):
        x = Tensor(rng.normal(size=(2, 6, 6)), requires_grad=True)
        k = ops.ConvKernel(
            Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True),
            Tensor(rng.normal(size=3), requires_grad=True),
            dilation=dilation,
        )
        results += check_function(
            f"conv2d_d{dilation}",
            lambda x=x, k=k: ops.sq_mean(ops.conv2d(x, k)),
            {"input": x, "weight": k.weights, "bias": k.bias},
            PRIMITIVE_TOL,
        )
    return results


def check_deform(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(2, 6, 6)), requires_grad=True)
    k = ops.ConvKernel(
        Tensor(rng.normal(size=(2, 2, 3, 3)), requires_grad=True),
        Tensor(rng.normal(size=2), requires_grad=True),
    )
    off = Tensor(_offset_field(rng, 9, 6, 6), requires_grad=True)
    mod = Tensor(rng.uniform(0.2, 0.8, size=(9, 6, 6)), requires_grad=True)

    def f():
        return ops.sq_mean(deform_conv(x, SamplingField(off, mod), k))

    return check_function(
        "deform_conv",
        f,
        {"feat": x, "offsets": off, "modulation": mod, "weight": k.weights, "bias": k.bias},
        COMPOSITE_TOL,
    )


def check_nonlocal(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(4, 2, 3)), requires_grad=True)
    y = Tensor(rng.normal(size=(4, 2, 3)), requires_grad=True)
    w = NonLocalWeights.fan_in(rng, 4, 2)

    def f():
        return ops.sq_mean(nonlocal_forward(x, y, w))

    wrt = {"x": x, "y": y}
    for label in ("u", "v", "g", "z"):
        kern = getattr(w, label)
        wrt[f"{label}.weight"] = kern.weights
        wrt[f"{label}.bias"] = kern.bias
    return check_function("nonlocal", f, wrt, COMPOSITE_TOL)


def check_align(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    channels = 4
    stage = AlignStage.fan_in(rng, channels, 2)
    # Bias the zero-initialized head so predicted sample positions sit well
    # away from integer grid lines, where the interpolant is non-smooth.
    stage.head.weights.data[:] = rng.normal(0.0, 0.02, stage.head.weights.data.shape)
    head_bias = stage.head.bias.data
    head_bias[: 2 * stage.deform_kernel.tap_count] = 0.3
    f_i = Tensor(rng.normal(size=(channels, 5, 5)), requires_grad=True)
    f_t = Tensor(rng.normal(size=(channels, 5, 5)), requires_grad=True)

    def f():
        field = predict_field(f_i, f_t, stage)
        return ops.sq_mean(deform_conv(f_i, field, stage.deform_kernel))

    wrt = {"f_i": f_i, "f_t": f_t, "reduce.weight": stage.reduce.weights,
           "head.weight": stage.head.weights, "head.bias": stage.head.bias,
           "deform.weight": stage.deform_kernel.weights, "deform.bias": stage.deform_kernel.bias,
           "hffb.fuse.weight": stage.hffb.fuse_kernel.weights}
    for r in (1, len(stage.hffb.branch_kernels)):
        wrt[f"hffb.branch{r}.weight"] = stage.hffb.branch_kernels[r - 1].weights
    return check_function("align_stage", f, wrt, COMPOSITE_TOL)


def check_rrdb(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    channels, growth = 4, 2
    p = RRDBParams([_dense_block(rng, channels, growth) for _ in range(3)])
    # 0.1-scaled init makes gradients vanishingly small; rescale for a
    # meaningful finite-difference comparison.
    for block in p.blocks:
        for conv in block:
            conv.weights.data *= 10.0
    x = Tensor(rng.normal(size=(channels, 4, 4)), requires_grad=True)

    def f():
        return ops.sq_mean(rrdb_forward(x, p))

    wrt = {"x": x}
    for j, block in enumerate(p.blocks, start=1):
        wrt[f"db{j}.conv1.weight"] = block[0].weights
        wrt[f"db{j}.conv5.weight"] = block[-1].weights
        wrt[f"db{j}.conv5.bias"] = block[-1].bias
    return check_function("rrdb", f, wrt, COMPOSITE_TOL)


SUITES = {
    "primitives": check_primitives,
    "conv2d": check_conv2d,
    "deform": check_deform,
    "nonlocal": check_nonlocal,
    "align": check_align,
    "rrdb": check_rrdb,
}


def run_suite(component: str, seed: int = 0) -> list:
    if component == "all":
        results = []
        for fn in SUITES.values():
            results += fn(seed)
        return results
    if component not in SUITES:
        raise ValueError(f"unknown gradcheck component {component!r}; choose from {sorted(SUITES)} or 'all'")
    return SUITES[component](seed)
