"""Vectorized numpy implementation of the hot kernels.

Convolutions go through sliding-window views and tensordot so the inner
contraction runs in BLAS; pooling uses a 6-D window reshape. Kept as the
portable fallback and as the cross-check for the numba backend.
"""

import numpy as np

from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, w, b):
    kh, kw = w.shape[2], w.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (kh // 2,) * 2, (kw // 2,) * 2))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # N,Cin,H,W,kh,kw
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # N,H,W,Cout
    y += b
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def conv2d_backward_input(gy, w):
    kh, kw = w.shape[2], w.shape[3]
    gyp = np.pad(gy, ((0, 0), (0, 0), (kh // 2,) * 2, (kw // 2,) * 2))
    win = sliding_window_view(gyp, (kh, kw), axis=(2, 3))  # N,Cout,H,W,kh,kw
    w_flipped = w[:, :, ::-1, ::-1]
    gx = np.tensordot(win, w_flipped, axes=([1, 4, 5], [0, 2, 3]))  # N,H,W,Cin
    return np.ascontiguousarray(gx.transpose(0, 3, 1, 2))


def conv2d_backward_weight(x, gy, kh, kw):
    xp = np.pad(x, ((0, 0), (0, 0), (kh // 2,) * 2, (kw // 2,) * 2))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    gw = np.tensordot(gy, win, axes=([0, 2, 3], [0, 2, 3]))  # Cout,Cin,kh,kw
    gb = gy.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(gw), gb


def _windows(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5) \
            .reshape(n, c, h // 2, w // 2, 4)


def maxpool2_forward(x):
    win = _windows(x)
    idx = win.argmax(axis=-1).astype(np.int8)  # first max in row-major order
    y = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool2_backward(gy, idx):
    n, c, h2, w2 = gy.shape
    scattered = np.zeros((n, c, h2, w2, 4), dtype=gy.dtype)
    np.put_along_axis(scattered, idx[..., None].astype(np.intp),
                      gy[..., None], axis=-1)
    gx = scattered.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5) \
                  .reshape(n, c, h2 * 2, w2 * 2)
    return np.ascontiguousarray(gx)
