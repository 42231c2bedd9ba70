"""Dispatch to the kernel backend chosen at import time (see backend.py)."""

from .backend import BACKEND, USE_NUMBA

if USE_NUMBA:
    from . import kernels_numba as _impl
else:
    from . import kernels_numpy as _impl

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
deform_conv_forward = _impl.deform_conv_forward
deform_conv_backward = _impl.deform_conv_backward

__all__ = [
    "BACKEND",
    "conv2d_forward",
    "conv2d_backward",
    "deform_conv_forward",
    "deform_conv_backward",
]
