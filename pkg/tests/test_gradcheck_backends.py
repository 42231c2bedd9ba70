"""Gradient-check suites at their declared tolerances, and agreement
between the numba and numpy kernel backends."""

import numpy as np
import pytest

from dnln import kernels_numpy
from dnln.backend import HAVE_NUMBA
from dnln.gradcheck import numeric_gradient, relative_error, run_suite
from dnln.ops import sq_mean
from dnln.tensor import Tensor


@pytest.mark.parametrize("component", ["primitives", "conv2d", "deform", "nonlocal", "align", "rrdb"])
def test_suite_passes(component):
    results = run_suite(component, seed=0)
    failed = [r.line() for r in results if not r.passed]
    assert not failed, "\n".join(failed)


def test_unknown_component_rejected():
    with pytest.raises(ValueError, match="component"):
        run_suite("bogus")


def test_numeric_gradient_on_closed_form():
    t = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    num = numeric_gradient(lambda: sq_mean(t), t)
    assert relative_error(2 * t.data / 3, num) < 1e-9


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
class TestBackendParity:
    def _data(self, seed, cin=3, cout=4, h=7, w=6):
        rng = np.random.default_rng(seed)
        return (
            rng.normal(size=(cin, h, w)),
            rng.normal(size=(cout, cin, 3, 3)),
            rng.normal(size=cout),
            rng.normal(size=(cout, h, w)),
        )

    @pytest.mark.parametrize("dilation", [1, 2])
    def test_conv_forward_backward_agree(self, dilation):
        from dnln import kernels_numba

        x, w, b, gy = self._data(11)
        ya = kernels_numba.conv2d_forward(x, w, b, dilation)
        yb = kernels_numpy.conv2d_forward(x, w, b, dilation)
        assert np.abs(ya - yb).max() < 1e-12
        for ga, gb in zip(
            kernels_numba.conv2d_backward(x, w, gy, dilation),
            kernels_numpy.conv2d_backward(x, w, gy, dilation),
        ):
            assert np.abs(ga - gb).max() < 1e-12

    def test_deform_forward_backward_agree(self):
        from dnln import kernels_numba

        rng = np.random.default_rng(12)
        x = rng.normal(size=(3, 6, 6))
        w = rng.normal(size=(2, 3, 3, 3))
        b = rng.normal(size=2)
        off = rng.uniform(-2, 2, size=(18, 6, 6))
        mod = rng.uniform(0, 1, size=(9, 6, 6))
        gy = rng.normal(size=(2, 6, 6))
        ya = kernels_numba.deform_conv_forward(x, off, mod, w, b)
        yb = kernels_numpy.deform_conv_forward(x, off, mod, w, b)
        assert np.abs(ya - yb).max() < 1e-12
        for ga, gb in zip(
            kernels_numba.deform_conv_backward(x, off, mod, w, gy),
            kernels_numpy.deform_conv_backward(x, off, mod, w, gy),
        ):
            assert np.abs(ga - gb).max() < 1e-12

    def test_kernels_bitwise_deterministic(self):
        from dnln import kernels_numba

        x, w, b, gy = self._data(13)
        assert np.array_equal(
            kernels_numba.conv2d_forward(x, w, b, 1), kernels_numba.conv2d_forward(x, w, b, 1)
        )
        a = kernels_numba.conv2d_backward(x, w, gy, 1)
        c = kernels_numba.conv2d_backward(x, w, gy, 1)
        assert all(np.array_equal(p, q) for p, q in zip(a, c))
