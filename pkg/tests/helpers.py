"""Shared test utilities: finite differences and brute-force references."""

import numpy as np


def numeric_grad(loss_fn, x, h=1e-5):
    """Central finite-difference gradient of loss_fn w.r.t. array x.

    x is perturbed in place one element at a time; loss_fn takes no
    arguments and must read x afresh on every call.
    """
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = loss_fn()
        flat[i] = original - h
        minus = loss_fn()
        flat[i] = original
        gflat[i] = (plus - minus) / (2.0 * h)
    return grad


def assert_grads_close(analytic, numeric, rtol=1e-6, atol=1e-8):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    bad = np.abs(analytic - numeric) > atol + rtol * scale
    assert not bad.any(), (
        f"{bad.sum()} of {bad.size} gradient entries differ; worst "
        f"analytic {analytic[bad].ravel()[0]!r} vs numeric "
        f"{numeric[bad].ravel()[0]!r}")


def tie_free(rng, shape, spacing=0.05):
    """Random array whose values are pairwise separated by >= spacing/2,
    so 2x2 pooling windows never tie and finite differences cannot cross
    an argmax change."""
    n = int(np.prod(shape))
    values = (np.arange(n, dtype=np.float64) - n / 2.0) * spacing
    return rng.permutation(values).reshape(shape)


def conv2d_reference(x, w, b):
    """Direct quadruple-loop same-padded correlation, the slow oracle."""
    n_batch, c_in, height, width = x.shape
    c_out, _, kh, kw = w.shape
    pad_h, pad_w = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    out = np.zeros((n_batch, c_out, height, width), dtype=x.dtype)
    for n in range(n_batch):
        for co in range(c_out):
            for i in range(height):
                for j in range(width):
                    acc = 0.0
                    for ci in range(c_in):
                        for dk in range(kh):
                            for dl in range(kw):
                                acc += (w[co, ci, dk, dl]
                                        * xp[n, ci, i + dk, j + dl])
                    out[n, co, i, j] = acc + b[co]
    return out


def blur_reference(values, sigma):
    """Dense 2-D truncated-Gaussian blur with edge clamping."""
    radius = int(np.ceil(3.0 * sigma))
    coords = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-0.5 * (coords / sigma) ** 2)
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    h, w = values.shape
    out = np.zeros_like(values)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for di in range(-radius, radius + 1):
                for dj in range(-radius, radius + 1):
                    ii = min(max(i + di, 0), h - 1)
                    jj = min(max(j + dj, 0), w - 1)
                    acc += k2[di + radius, dj + radius] * values[ii, jj]
            out[i, j] = acc
    return out
