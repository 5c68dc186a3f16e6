"""Numba-jitted loop implementation of the hot kernels.

Loops are arranged so the innermost index walks contiguous rows, which
LLVM auto-vectorizes without reassociation: the forward and input-gradient
kernels accumulate into the output row, and the weight-gradient kernel
accumulates into a per-row vector that is horizontally summed once at the
end. Compiled variants are cached on disk, so the first call per dtype
pays the JIT cost only once per environment.
"""

import numpy as np

from numba import njit


@njit(cache=True)
def _conv2d_forward(xp, w, b, out):
    n_batch, c_out, height, width = out.shape
    c_in, kh, kw = w.shape[1], w.shape[2], w.shape[3]
    for n in range(n_batch):
        for co in range(c_out):
            plane = out[n, co]
            for i in range(height):
                row = plane[i]
                for j in range(width):
                    row[j] = b[co]
            for ci in range(c_in):
                for dk in range(kh):
                    for dl in range(kw):
                        wv = w[co, ci, dk, dl]
                        for i in range(height):
                            xrow = xp[n, ci, i + dk]
                            row = plane[i]
                            for j in range(width):
                                row[j] += wv * xrow[j + dl]


@njit(cache=True)
def _conv2d_backward_input(gyp, w, gx):
    n_batch, c_in, height, width = gx.shape
    c_out, kh, kw = w.shape[0], w.shape[2], w.shape[3]
    for n in range(n_batch):
        for ci in range(c_in):
            plane = gx[n, ci]
            for co in range(c_out):
                for dk in range(kh):
                    for dl in range(kw):
                        wv = w[co, ci, kh - 1 - dk, kw - 1 - dl]
                        for i in range(height):
                            grow = gyp[n, co, i + dk]
                            row = plane[i]
                            for j in range(width):
                                row[j] += wv * grow[j + dl]


@njit(cache=True)
def _conv2d_backward_weight(xp, gy, gw, gb):
    n_batch, c_out, height, width = gy.shape
    c_in, kh, kw = gw.shape[1], gw.shape[2], gw.shape[3]
    acc = np.zeros(width, dtype=gy.dtype)
    for co in range(c_out):
        for j in range(width):
            acc[j] = 0.0
        for n in range(n_batch):
            for i in range(height):
                grow = gy[n, co, i]
                for j in range(width):
                    acc[j] += grow[j]
        gb[co] += acc.sum()
        for ci in range(c_in):
            for dk in range(kh):
                for dl in range(kw):
                    for j in range(width):
                        acc[j] = 0.0
                    for n in range(n_batch):
                        for i in range(height):
                            grow = gy[n, co, i]
                            xrow = xp[n, ci, i + dk]
                            for j in range(width):
                                acc[j] += grow[j] * xrow[j + dl]
                    gw[co, ci, dk, dl] += acc.sum()


@njit(cache=True)
def _maxpool2_forward(x, y, idx):
    n_batch, chans, h2, w2 = y.shape
    for n in range(n_batch):
        for c in range(chans):
            for i in range(h2):
                for j in range(w2):
                    best = x[n, c, 2 * i, 2 * j]
                    k = 0
                    if x[n, c, 2 * i, 2 * j + 1] > best:
                        best = x[n, c, 2 * i, 2 * j + 1]
                        k = 1
                    if x[n, c, 2 * i + 1, 2 * j] > best:
                        best = x[n, c, 2 * i + 1, 2 * j]
                        k = 2
                    if x[n, c, 2 * i + 1, 2 * j + 1] > best:
                        best = x[n, c, 2 * i + 1, 2 * j + 1]
                        k = 3
                    y[n, c, i, j] = best
                    idx[n, c, i, j] = k


@njit(cache=True)
def _maxpool2_backward(gy, idx, gx):
    n_batch, chans, h2, w2 = gy.shape
    for n in range(n_batch):
        for c in range(chans):
            for i in range(h2):
                for j in range(w2):
                    k = idx[n, c, i, j]
                    gx[n, c, 2 * i + k // 2, 2 * j + k % 2] = gy[n, c, i, j]


def _pad_spatial(x, kh, kw):
    return np.pad(x, ((0, 0), (0, 0), (kh // 2,) * 2, (kw // 2,) * 2))


def conv2d_forward(x, w, b):
    kh, kw = w.shape[2], w.shape[3]
    out = np.empty((x.shape[0], w.shape[0], x.shape[2], x.shape[3]),
                   dtype=x.dtype)
    _conv2d_forward(_pad_spatial(x, kh, kw), w, b, out)
    return out


def conv2d_backward_input(gy, w):
    kh, kw = w.shape[2], w.shape[3]
    gx = np.zeros((gy.shape[0], w.shape[1], gy.shape[2], gy.shape[3]),
                  dtype=gy.dtype)
    _conv2d_backward_input(_pad_spatial(gy, kh, kw), w, gx)
    return gx


def conv2d_backward_weight(x, gy, kh, kw):
    gw = np.zeros((gy.shape[1], x.shape[1], kh, kw), dtype=x.dtype)
    gb = np.zeros(gy.shape[1], dtype=x.dtype)
    _conv2d_backward_weight(_pad_spatial(x, kh, kw), gy, gw, gb)
    return gw, gb


def maxpool2_forward(x):
    n, c, h, w = x.shape
    y = np.empty((n, c, h // 2, w // 2), dtype=x.dtype)
    idx = np.empty((n, c, h // 2, w // 2), dtype=np.int8)
    _maxpool2_forward(x, y, idx)
    return y, idx


def maxpool2_backward(gy, idx):
    n, c, h2, w2 = gy.shape
    gx = np.zeros((n, c, h2 * 2, w2 * 2), dtype=gy.dtype)
    _maxpool2_backward(gy, idx, gx)
    return gx
