"""Benchmark the numba-jitted kernels against the pure-numpy fallback.

Times forward and backward of the dense and deformable convolutions on a
small (desk-training) and a larger (inference-like) shape. Run:

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from dnln import kernels_numpy  # noqa: E402

try:
    from dnln import kernels_numba

    BACKENDS = [("numba", kernels_numba), ("numpy", kernels_numpy)]
except ImportError:
    BACKENDS = [("numpy", kernels_numpy)]


def _timeit(fn, repeat):
    fn()  # warm-up (and jit compile)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat * 1e3


def bench_shape(label, cin, cout, h, w, repeat):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(cin, h, w))
    wts = rng.normal(size=(cout, cin, 3, 3))
    b = rng.normal(size=cout)
    gy = rng.normal(size=(cout, h, w))
    off = rng.uniform(-2, 2, size=(18, h, w))
    mod = rng.uniform(0, 1, size=(9, h, w))
    woff = rng.normal(size=(cout, cin, 3, 3))

    print(f"\n{label}: {cin}ch -> {cout}ch on {h}x{w}")
    header = f"{'kernel':<18}" + "".join(f"{name:>12}" for name, _ in BACKENDS)
    print(header)
    rows = [
        ("conv2d fwd", lambda m: m.conv2d_forward(x, wts, b, 1)),
        ("conv2d bwd", lambda m: m.conv2d_backward(x, wts, gy, 1)),
        ("conv2d d4 fwd", lambda m: m.conv2d_forward(x, wts, b, 4)),
        ("deform fwd", lambda m: m.deform_conv_forward(x, off, mod, woff, b)),
        ("deform bwd", lambda m: m.deform_conv_backward(x, off, mod, woff, gy)),
    ]
    for name, call in rows:
        times = [_timeit(lambda m=mod_: call(m), repeat) for _, mod_ in BACKENDS]
        print(f"{name:<18}" + "".join(f"{t:>10.3f}ms" for t in times))

    if len(BACKENDS) == 2:
        a = BACKENDS[0][1].conv2d_forward(x, wts, b, 1)
        c = BACKENDS[1][1].conv2d_forward(x, wts, b, 1)
        print(f"max |numba - numpy| on conv2d fwd: {np.abs(a - c).max():.2e}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=50)
    args = parser.parse_args()
    print(f"backends: {', '.join(name for name, _ in BACKENDS)}")
    bench_shape("desk training shape", 16, 8, 16, 16, args.repeat)
    bench_shape("inference-like shape", 64, 64, 64, 64, max(args.repeat // 10, 3))


if __name__ == "__main__":
    main()
