"""Pure-numpy kernels: vectorized fallback for the hot convolution loops.

Shapes follow one convention throughout: feature maps are (C, H, W), conv
weights are (C_out, C_in, kh, kw), offsets are (2K, H, W) with (dy, dx)
interleaved per tap, modulation is (K, H, W). All convolutions are "same"
(stride 1, zero padding of dilation*(k-1)/2 per side).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x, kh, kw, dilation):
    """Sliding dilated windows of a padded map: (C, H, W, kh, kw)."""
    c, h, w = x.shape
    ph = dilation * (kh - 1) // 2
    pw = dilation * (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    eh = dilation * (kh - 1) + 1
    ew = dilation * (kw - 1) + 1
    win = sliding_window_view(xp, (eh, ew), axis=(1, 2))
    return win[:, :, :, ::dilation, ::dilation]


def conv2d_forward(x, w, b, dilation):
    win = _windows(x, w.shape[2], w.shape[3], dilation)
    y = np.einsum("cijuv,ocuv->oij", win, w, optimize=True)
    y += b[:, None, None]
    return y


def conv2d_backward(x, w, gy, dilation):
    kh, kw = w.shape[2], w.shape[3]
    # Input gradient is a same-padded convolution of gy with the kernel
    # flipped spatially and contracted over the output-channel axis.
    gwin = _windows(gy, kh, kw, dilation)
    gx = np.einsum("oijuv,ocuv->cij", gwin, w[:, :, ::-1, ::-1], optimize=True)
    win = _windows(x, kh, kw, dilation)
    gw = np.einsum("cijuv,oij->ocuv", win, gy, optimize=True)
    gb = gy.sum(axis=(1, 2))
    return gx, gw, gb


def _sample_coords(off, kh, kw):
    """Absolute fractional sample positions per tap: two (K, H, W) arrays."""
    k2, h, w = off.shape
    kk = k2 // 2
    ii = np.arange(h).reshape(1, h, 1)
    jj = np.arange(w).reshape(1, 1, w)
    taps = np.arange(kk)
    py = (taps // kw - (kh - 1) // 2).reshape(kk, 1, 1)
    px = (taps % kw - (kw - 1) // 2).reshape(kk, 1, 1)
    sy = ii + py + off[0::2]
    sx = jj + px + off[1::2]
    return sy, sx


def _gather(x, yy, xx):
    """Read x[:, yy, xx] with zero outside the map: (C, K, H, W)."""
    c, h, w = x.shape
    valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
    g = x[:, np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
    return g * valid[None]


def deform_conv_forward(x, off, mod, w, b):
    cout, cin, kh, kw = w.shape
    kk = kh * kw
    sy, sx = _sample_coords(off, kh, kw)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    dy = sy - y0
    dx = sx - x0
    v = (
        (1 - dy) * (1 - dx) * _gather(x, y0, x0)
        + (1 - dy) * dx * _gather(x, y0, x0 + 1)
        + dy * (1 - dx) * _gather(x, y0 + 1, x0)
        + dy * dx * _gather(x, y0 + 1, x0 + 1)
    )
    y = np.einsum("ckij,ock->oij", v * mod[None], w.reshape(cout, cin, kk), optimize=True)
    y += b[:, None, None]
    return y


def deform_conv_backward(x, off, mod, w, gy):
    cout, cin, kh, kw = w.shape
    kk = kh * kw
    h, wd = x.shape[1], x.shape[2]
    wr = w.reshape(cout, cin, kk)

    sy, sx = _sample_coords(off, kh, kw)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    dy = sy - y0
    dx = sx - x0
    g00 = _gather(x, y0, x0)
    g01 = _gather(x, y0, x0 + 1)
    g10 = _gather(x, y0 + 1, x0)
    g11 = _gather(x, y0 + 1, x0 + 1)
    w00 = (1 - dy) * (1 - dx)
    w01 = (1 - dy) * dx
    w10 = dy * (1 - dx)
    w11 = dy * dx
    v = w00 * g00 + w01 * g01 + w10 * g10 + w11 * g11

    gval = np.einsum("oij,ock->ckij", gy, wr, optimize=True)
    gmod = (gval * v).sum(axis=0)
    gv = gval * mod[None]
    gw = np.einsum("oij,ckij->ock", gy, v * mod[None], optimize=True).reshape(w.shape)
    gb = gy.sum(axis=(1, 2))

    gx = np.zeros_like(x)
    cidx = np.arange(cin)[:, None, None, None]
    for cw, yy, xx in ((w00, y0, x0), (w01, y0, x0 + 1), (w10, y0 + 1, x0), (w11, y0 + 1, x0 + 1)):
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < wd)
        contrib = gv * (cw * valid)[None]
        np.add.at(
            gx,
            (cidx, np.clip(yy, 0, h - 1)[None], np.clip(xx, 0, wd - 1)[None]),
            contrib,
        )

    dv_dy = (g10 - g00) * (1 - dx)[None] + (g11 - g01) * dx[None]
    dv_dx = (g01 - g00) * (1 - dy)[None] + (g11 - g10) * dy[None]
    goff = np.empty_like(off)
    goff[0::2] = (gv * dv_dy).sum(axis=0)
    goff[1::2] = (gv * dv_dx).sum(axis=0)
    return gx, goff, gmod, gw, gb
