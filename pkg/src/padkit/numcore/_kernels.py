"""Gather/scatter kernels behind conv2d.

Columns are laid out as ``(C*kh*kw, N*Ho*Wo)`` so the innermost loop of both
kernels walks contiguous output pixels.  Both backends produce bit-identical
results: the gather is a pure copy and the scatter accumulates every input
pixel in the same (ki, kj) order.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from padkit import _accel
from padkit._accel import njit


def im2col_numpy(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride]
    # (N, C, Ho, Wo, kh, kw) -> (C, kh, kw, N, Ho, Wo)
    return np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(c * kh * kw, n * ho * wo)


def col2im_numpy(dcols, xshape, kh, kw, stride, ho, wo):
    n, c, hp, wp = xshape
    d = dcols.reshape(c, kh, kw, n, ho, wo)
    out = np.zeros((n, c, hp, wp), dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += d[:, i, j].transpose(1, 0, 2, 3)
    return out


@njit
def _im2col_nb(xp, kh, kw, stride, ho, wo, out):
    n, c = xp.shape[0], xp.shape[1]
    for ch in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ch * kh + i) * kw + j
                for b in range(n):
                    base = b * ho * wo
                    for y in range(ho):
                        yy = y * stride + i
                        dst = base + y * wo
                        for x in range(wo):
                            out[row, dst + x] = xp[b, ch, yy, x * stride + j]
    return out


@njit
def _col2im_nb(dcols, kh, kw, stride, ho, wo, out):
    n, c = out.shape[0], out.shape[1]
    for ch in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ch * kh + i) * kw + j
                for b in range(n):
                    base = b * ho * wo
                    for y in range(ho):
                        dst = out[b, ch, i + stride * y]
                        src = base + y * wo
                        for x in range(wo):
                            dst[j + stride * x] += dcols[row, src + x]
    return out


def im2col_numba(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[:2]
    out = np.empty((c * kh * kw, n * ho * wo), dtype=xp.dtype)
    return _im2col_nb(np.ascontiguousarray(xp), kh, kw, stride, ho, wo, out)


def col2im_numba(dcols, xshape, kh, kw, stride, ho, wo):
    out = np.zeros(xshape, dtype=dcols.dtype)
    return _col2im_nb(np.ascontiguousarray(dcols), kh, kw, stride, ho, wo, out)


def im2col(xp, kh, kw, stride, ho, wo):
    # the gather is a strided copy numpy already does at memory speed; the
    # compiled version measured slower (benchmarks/bench_kernels.py) and is
    # kept only as a cross-check
    return im2col_numpy(xp, kh, kw, stride, ho, wo)


def col2im(dcols, xshape, kh, kw, stride, ho, wo):
    if _accel.USE_NUMBA:
        return col2im_numba(dcols, xshape, kh, kw, stride, ho, wo)
    return col2im_numpy(dcols, xshape, kh, kw, stride, ho, wo)
