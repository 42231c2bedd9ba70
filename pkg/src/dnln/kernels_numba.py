"""Numba-jitted loop kernels for the hot convolution paths.

Same contracts as kernels_numpy; every kernel is a serial loop so results
are bit-reproducible run to run. First call per signature pays a compile
cost, amortized by cache=True.
"""

import numpy as np
from numba import njit


def _c(a):
    return np.ascontiguousarray(a)


@njit(cache=True)
def _conv2d_forward(x, w, b, dilation):
    cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ph = dilation * (kh - 1) // 2
    pw = dilation * (kw - 1) // 2
    y = np.empty((cout, h, wd))
    # Each thread owns one output channel; per-tap in-bounds ranges are
    # hoisted so inner loops run contiguous image rows.
    for o in range(cout):
        for i in range(h):
            for j in range(wd):
                y[o, i, j] = b[o]
        for u in range(kh):
            du = u * dilation - ph
            i_lo = max(0, -du)
            i_hi = min(h, h - du)
            for v in range(kw):
                dv = v * dilation - pw
                j_lo = max(0, -dv)
                j_hi = min(wd, wd - dv)
                for c in range(cin):
                    wv = w[o, c, u, v]
                    for i in range(i_lo, i_hi):
                        for j in range(j_lo, j_hi):
                            y[o, i, j] += wv * x[c, i + du, j + dv]
    return y


@njit(cache=True)
def _conv2d_backward_wb(x, w, gy, dilation):
    cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ph = dilation * (kh - 1) // 2
    pw = dilation * (kw - 1) // 2
    gw = np.zeros_like(w)
    gb = np.zeros(cout)
    for o in range(cout):
        acc = 0.0
        for i in range(h):
            for j in range(wd):
                acc += gy[o, i, j]
        gb[o] = acc
        for u in range(kh):
            du = u * dilation - ph
            i_lo = max(0, -du)
            i_hi = min(h, h - du)
            for v in range(kw):
                dv = v * dilation - pw
                j_lo = max(0, -dv)
                j_hi = min(wd, wd - dv)
                for c in range(cin):
                    acc = 0.0
                    for i in range(i_lo, i_hi):
                        for j in range(j_lo, j_hi):
                            acc += gy[o, i, j] * x[c, i + du, j + dv]
                    gw[o, c, u, v] = acc
    return gw, gb


@njit(cache=True)
def _conv2d_backward_x(w, gy, dilation, h, wd):
    cout, cin, kh, kw = w.shape
    ph = dilation * (kh - 1) // 2
    pw = dilation * (kw - 1) // 2
    gx = np.zeros((cin, h, wd))
    # Gather form: each thread owns one input channel, accumulating the
    # spatially flipped taps over all output channels.
    for c in range(cin):
        for o in range(cout):
            for u in range(kh):
                du = u * dilation - ph
                i_lo = max(0, -du)
                i_hi = min(h, h - du)
                for v in range(kw):
                    dv = v * dilation - pw
                    j_lo = max(0, -dv)
                    j_hi = min(wd, wd - dv)
                    wv = w[o, c, u, v]
                    for i in range(i_lo, i_hi):
                        for j in range(j_lo, j_hi):
                            gx[c, i + du, j + dv] += wv * gy[o, i, j]
    return gx


def _conv2d_backward(x, w, gy, dilation):
    gw, gb = _conv2d_backward_wb(x, w, gy, dilation)
    gx = _conv2d_backward_x(w, gy, dilation, x.shape[1], x.shape[2])
    return gx, gw, gb


@njit(cache=True)
def _deform_conv_forward(x, off, mod, w, b):
    cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    kk = kh * kw
    ch = (kh - 1) // 2
    cw = (kw - 1) // 2
    y = np.empty((cout, h, wd))
    val = np.empty(cin)
    for i in range(h):
        for j in range(wd):
            for o in range(cout):
                y[o, i, j] = b[o]
            for k in range(kk):
                u = k // kw
                v = k % kw
                sy = i + u - ch + off[2 * k, i, j]
                sx = j + v - cw + off[2 * k + 1, i, j]
                m = mod[k, i, j]
                y0 = int(np.floor(sy))
                x0 = int(np.floor(sx))
                dy = sy - y0
                dx = sx - x0
                w00 = (1.0 - dy) * (1.0 - dx)
                w01 = (1.0 - dy) * dx
                w10 = dy * (1.0 - dx)
                w11 = dy * dx
                r0 = 0 <= y0 < h
                r1 = 0 <= y0 + 1 < h
                c0 = 0 <= x0 < wd
                c1 = 0 <= x0 + 1 < wd
                for c in range(cin):
                    acc = 0.0
                    if r0:
                        if c0:
                            acc += w00 * x[c, y0, x0]
                        if c1:
                            acc += w01 * x[c, y0, x0 + 1]
                    if r1:
                        if c0:
                            acc += w10 * x[c, y0 + 1, x0]
                        if c1:
                            acc += w11 * x[c, y0 + 1, x0 + 1]
                    val[c] = acc * m
                for o in range(cout):
                    acc2 = 0.0
                    for c in range(cin):
                        acc2 += w[o, c, u, v] * val[c]
                    y[o, i, j] += acc2
    return y


@njit(cache=True)
def _deform_conv_backward(x, off, mod, w, gy):
    cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    kk = kh * kw
    ch = (kh - 1) // 2
    cw = (kw - 1) // 2
    gx = np.zeros_like(x)
    goff = np.zeros_like(off)
    gmod = np.zeros_like(mod)
    gw = np.zeros_like(w)
    gb = np.zeros(cout)
    for i in range(h):
        for j in range(wd):
            for o in range(cout):
                gb[o] += gy[o, i, j]
            for k in range(kk):
                u = k // kw
                v = k % kw
                sy = i + u - ch + off[2 * k, i, j]
                sx = j + v - cw + off[2 * k + 1, i, j]
                m = mod[k, i, j]
                y0 = int(np.floor(sy))
                x0 = int(np.floor(sx))
                dy = sy - y0
                dx = sx - x0
                w00 = (1.0 - dy) * (1.0 - dx)
                w01 = (1.0 - dy) * dx
                w10 = dy * (1.0 - dx)
                w11 = dy * dx
                r0 = 0 <= y0 < h
                r1 = 0 <= y0 + 1 < h
                c0 = 0 <= x0 < wd
                c1 = 0 <= x0 + 1 < wd
                gm = 0.0
                gsy = 0.0
                gsx = 0.0
                for c in range(cin):
                    x00 = x[c, y0, x0] if (r0 and c0) else 0.0
                    x01 = x[c, y0, x0 + 1] if (r0 and c1) else 0.0
                    x10 = x[c, y0 + 1, x0] if (r1 and c0) else 0.0
                    x11 = x[c, y0 + 1, x0 + 1] if (r1 and c1) else 0.0
                    s = w00 * x00 + w01 * x01 + w10 * x10 + w11 * x11
                    gval = 0.0
                    for o in range(cout):
                        g = gy[o, i, j]
                        gval += g * w[o, c, u, v]
                        gw[o, c, u, v] += g * s * m
                    gm += gval * s
                    gs = gval * m
                    if r0:
                        if c0:
                            gx[c, y0, x0] += gs * w00
                        if c1:
                            gx[c, y0, x0 + 1] += gs * w01
                    if r1:
                        if c0:
                            gx[c, y0 + 1, x0] += gs * w10
                        if c1:
                            gx[c, y0 + 1, x0 + 1] += gs * w11
                    gsy += gs * ((x10 - x00) * (1.0 - dx) + (x11 - x01) * dx)
                    gsx += gs * ((x01 - x00) * (1.0 - dy) + (x11 - x10) * dy)
                gmod[k, i, j] += gm
                goff[2 * k, i, j] += gsy
                goff[2 * k + 1, i, j] += gsx
    return gx, goff, gmod, gw, gb


def conv2d_forward(x, w, b, dilation):
    return _conv2d_forward(_c(x), _c(w), _c(b), dilation)


def conv2d_backward(x, w, gy, dilation):
    return _conv2d_backward(_c(x), _c(w), _c(gy), dilation)


def deform_conv_forward(x, off, mod, w, b):
    return _deform_conv_forward(_c(x), _c(off), _c(mod), _c(w), _c(b))


def deform_conv_backward(x, off, mod, w, gy):
    return _deform_conv_backward(_c(x), _c(off), _c(mod), _c(w), _c(gy))
