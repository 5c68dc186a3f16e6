"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray and remembers the tensors it was computed from
plus a closure that propagates its gradient to them. backward() walks the
graph once in reverse topological order. Gradients accumulate into .grad
until explicitly zeroed, so several backward passes over fresh graphs sum
their contributions into shared leaves (the usual minibatch pattern).

The operation set is exactly what an encoder-decoder convnet needs:
same-padded convolution, 2x2 max pooling, 2x nearest-neighbour upsampling,
channel concatenation, relu, tanh and mean squared error.
"""

import numpy as np

from . import kernels


class Tensor:
    """Node in the computation graph: value, gradient, and provenance."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=()):
        self.data = np.asarray(data)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def _as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _check_batched(name, t):
    if t.data.ndim != 4:
        raise ValueError(
            f"{name} must be 4-d (batch, channels, height, width), "
            f"got shape {t.data.shape}")


def conv2d(x, w, b):
    """Same-padded stride-1 correlation of x with kernels w plus bias b."""
    _check_batched("conv2d input", x)
    if w.data.ndim != 4:
        raise ValueError(f"conv2d weight must be 4-d, got shape {w.data.shape}")
    kh, kw = w.data.shape[2], w.data.shape[3]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d kernel size must be odd, got {kh}x{kw}")
    if x.data.shape[1] != w.data.shape[1]:
        raise ValueError(
            f"conv2d channel mismatch: input has {x.data.shape[1]}, "
            f"weight expects {w.data.shape[1]}")
    if b.data.shape != (w.data.shape[0],):
        raise ValueError(
            f"conv2d bias shape {b.data.shape} does not match "
            f"{w.data.shape[0]} output channels")
    if not (x.data.dtype == w.data.dtype == b.data.dtype):
        raise ValueError("conv2d operands must share one dtype")

    out = Tensor(kernels.conv2d_forward(x.data, w.data, b.data), (x, w, b))

    def _back():
        g = out.grad
        x.ensure_grad()
        x.grad += kernels.conv2d_backward_input(g, w.data)
        gw, gb = kernels.conv2d_backward_weight(x.data, g, kh, kw)
        w.ensure_grad()
        w.grad += gw
        b.ensure_grad()
        b.grad += gb

    out._backward = _back
    return out


def maxpool2(x):
    """2x2 max pooling with stride 2; ties go to the first position."""
    _check_batched("maxpool2 input", x)
    if x.data.shape[2] % 2 or x.data.shape[3] % 2:
        raise ValueError(
            f"maxpool2 needs even spatial dims, got {x.data.shape[2:]}")
    y, idx = kernels.maxpool2_forward(x.data)
    out = Tensor(y, (x,))

    def _back():
        x.ensure_grad()
        x.grad += kernels.maxpool2_backward(out.grad, idx)

    out._backward = _back
    return out


def upsample2(x):
    """Nearest-neighbour upsampling by 2 in both spatial dimensions."""
    _check_batched("upsample2 input", x)
    out = Tensor(x.data.repeat(2, axis=2).repeat(2, axis=3), (x,))

    def _back():
        n, c, h, w = x.data.shape
        x.ensure_grad()
        x.grad += out.grad.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))

    out._backward = _back
    return out


def concat_channels(a, b):
    """Concatenate two batches along the channel axis."""
    _check_batched("concat_channels input", a)
    _check_batched("concat_channels input", b)
    sa, sb = a.data.shape, b.data.shape
    if sa[0] != sb[0] or sa[2:] != sb[2:]:
        raise ValueError(
            f"concat_channels operands must agree outside the channel "
            f"axis, got {sa} and {sb}")
    out = Tensor(np.concatenate((a.data, b.data), axis=1), (a, b))
    ca = sa[1]

    def _back():
        a.ensure_grad()
        a.grad += out.grad[:, :ca]
        b.ensure_grad()
        b.grad += out.grad[:, ca:]

    out._backward = _back
    return out


def relu(x):
    out = Tensor(np.maximum(x.data, 0), (x,))

    def _back():
        x.ensure_grad()
        x.grad += out.grad * (x.data > 0)

    out._backward = _back
    return out


def tanh_act(x):
    t = np.tanh(x.data)
    out = Tensor(t, (x,))

    def _back():
        x.ensure_grad()
        x.grad += out.grad * (1.0 - t * t)

    out._backward = _back
    return out


def mse_loss(pred, target):
    """Mean of squared differences, reduced over every element."""
    target = _as_tensor(target)
    if pred.data.shape != target.data.shape:
        raise ValueError(
            f"mse_loss shape mismatch: {pred.data.shape} vs "
            f"{target.data.shape}")
    diff = pred.data - target.data
    out = Tensor(np.asarray((diff * diff).mean()), (pred, target))
    scale = 2.0 / diff.size

    def _back():
        g = out.grad * scale * diff
        pred.ensure_grad()
        pred.grad += g
        target.ensure_grad()
        target.grad -= g

    out._backward = _back
    return out


def _topo_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss):
    """Propagate d(loss)/d(node) into .grad for every node below loss."""
    if loss.data.size != 1:
        raise ValueError(
            f"backward needs a scalar loss, got shape {loss.data.shape}")
    loss.ensure_grad()
    loss.grad += np.ones_like(loss.data)
    for node in reversed(_topo_order(loss)):
        if node._backward is not None:
            node._backward()


def release_graph(root):
    """Break the reference cycles that hold a finished graph in memory.

    Every op closure captures its own output tensor, so a whole graph is
    one big cycle that only the cyclic collector would reclaim, long
    after the arrays stopped mattering. Severing parent links and
    closures lets plain refcounting free intermediates immediately.
    Leaves keep their data and any accumulated gradients; the released
    graph cannot run backward() again.
    """
    for node in _topo_order(root):
        node._backward = None
        node._parents = ()


def zero_gradients(tensors):
    for t in tensors:
        t.zero_grad()
