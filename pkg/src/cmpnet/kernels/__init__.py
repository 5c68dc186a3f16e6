"""Hot numeric kernels: convolution and 2x2 max pooling, forward and backward.

Two interchangeable implementations exist: a numba-jitted loop backend
(the default) and a pure-numpy fallback. Set the environment variable
``CMPNET_KERNELS=numpy`` (or ``numba``) before import to pick one
explicitly; when numba is not importable the numpy path is selected
automatically. Both backends produce results equal to within float
rounding, and ``benchmarks/bench_kernels.py`` compares their speed.

All kernels assume validated inputs (the tape layer checks shapes) and
are deterministic: repeated calls on identical inputs return bit-identical
arrays.
"""

import contextlib
import os
import warnings

from . import numpy_backend

_BACKENDS = {"numpy": numpy_backend}
try:
    from . import numba_backend
    _BACKENDS["numba"] = numba_backend
except ImportError:
    numba_backend = None

ENV_VAR = "CMPNET_KERNELS"


def _resolve_initial() -> str:
    requested = os.environ.get(ENV_VAR, "").strip().lower()
    fallback = "numba" if "numba" in _BACKENDS else "numpy"
    if not requested:
        return fallback
    if requested not in _BACKENDS:
        warnings.warn(f"{ENV_VAR}={requested!r} is not available "
                      f"(choices: {sorted(_BACKENDS)}); using {fallback}")
        return fallback
    return requested


_active = _resolve_initial()


def backend_name() -> str:
    return _active


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def set_backend(name: str) -> None:
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}, "
                         f"choices: {sorted(_BACKENDS)}")
    global _active
    _active = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def conv2d_forward(x, w, b):
    """Same-padded stride-1 cross-correlation plus per-channel bias.

    x: (N, Cin, H, W); w: (Cout, Cin, kh, kw) with odd kh, kw; b: (Cout,).
    Returns (N, Cout, H, W).
    """
    return _BACKENDS[_active].conv2d_forward(x, w, b)


def conv2d_backward_input(gy, w):
    """Gradient of the convolution output w.r.t. its input."""
    return _BACKENDS[_active].conv2d_backward_input(gy, w)


def conv2d_backward_weight(x, gy, kh, kw):
    """Gradients w.r.t. weight and bias; returns (gw, gb)."""
    return _BACKENDS[_active].conv2d_backward_weight(x, gy, kh, kw)


def maxpool2_forward(x):
    """2x2/stride-2 max pool. Returns (y, idx) where idx in 0..3 encodes
    the row-major window position of the max (first position on ties)."""
    return _BACKENDS[_active].maxpool2_forward(x)


def maxpool2_backward(gy, idx):
    """Routes each output gradient to its window's recorded argmax."""
    return _BACKENDS[_active].maxpool2_backward(gy, idx)
