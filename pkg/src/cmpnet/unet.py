"""Fully convolutional encoder-decoder with skip connections.

The network maps a 1-channel layout frame to a 1-channel normalized
topography frame of the same size. Each encoder level applies two 3x3
conv-relu pairs and halves the resolution with 2x2 max pooling; the
decoder mirrors it with nearest-neighbour upsampling, a channel-reducing
convolution, and concatenation of the matching encoder feature map. A
1x1 convolution plus tanh produces the output, so predictions live in
(-1, 1) like the normalized targets.

Because every layer is convolutional, a model trained at one frame size
runs inference at any spatial size divisible by 2^depth.
"""

import math

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .preprocess import NormStats


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 3
    base_channels: int = 16
    kernel: int = 3
    frame_size: int = 128

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1:
            raise ValueError(
                f"base_channels must be >= 1, got {self.base_channels}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd, got {self.kernel}")
        if self.frame_size < 1 or self.frame_size % (1 << self.depth):
            raise ValueError(
                f"frame_size {self.frame_size} is not divisible by "
                f"2^depth = {1 << self.depth}")


def param_shapes(config):
    """Name -> shape map for every parameter, in creation order."""
    k = config.kernel
    base = config.base_channels
    shapes = {}

    def conv(name, c_in, c_out, ksize):
        shapes[f"{name}_w"] = (c_out, c_in, ksize, ksize)
        shapes[f"{name}_b"] = (c_out,)

    for i in range(config.depth):
        c_in = 1 if i == 0 else base << (i - 1)
        conv(f"enc{i}_conv1", c_in, base << i, k)
        conv(f"enc{i}_conv2", base << i, base << i, k)
    conv("mid_conv1", base << (config.depth - 1), base << config.depth, k)
    conv("mid_conv2", base << config.depth, base << config.depth, k)
    for i in reversed(range(config.depth)):
        conv(f"dec{i}_up", base << (i + 1), base << i, k)
        conv(f"dec{i}_conv1", 2 * (base << i), base << i, k)
        conv(f"dec{i}_conv2", base << i, base << i, k)
    conv("head", base, 1, 1)
    return shapes


def parameter_count(config):
    return sum(math.prod(s) for s in param_shapes(config).values())


@dataclass
class ModelState:
    """Everything needed to run or resume a model.

    norm carries the target normalization fitted at dataset build time so
    predictions can be mapped back to nanometres; adam holds optimizer
    moments when the state comes from an interrupted or finished training
    run (see the training module).
    """

    config: UNetConfig
    params: dict
    norm: NormStats = field(default_factory=lambda: NormStats(-1.0, 1.0))
    adam: "object | None" = None
    epoch: int = 0


def init(config, seed):
    """Fresh model: uniform [-b, b] weights with b = sqrt(6 / fan_in)."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith("_w"):
            bound = math.sqrt(6.0 / math.prod(shape[1:]))
            params[name] = rng.uniform(-bound, bound, shape).astype(np.float32)
        else:
            params[name] = np.zeros(shape, dtype=np.float32)
    return ModelState(config=config, params=params)


def wrap_params(params):
    return {name: ad.Tensor(value) for name, value in params.items()}


def build_forward(param_tensors, config, x):
    """Assemble the computation graph from input tensor to prediction."""
    p = param_tensors

    def conv(name, t):
        return ad.conv2d(t, p[f"{name}_w"], p[f"{name}_b"])

    skips = []
    h = x
    for i in range(config.depth):
        h = ad.relu(conv(f"enc{i}_conv1", h))
        h = ad.relu(conv(f"enc{i}_conv2", h))
        skips.append(h)
        h = ad.maxpool2(h)
    h = ad.relu(conv("mid_conv1", h))
    h = ad.relu(conv("mid_conv2", h))
    for i in reversed(range(config.depth)):
        h = conv(f"dec{i}_up", ad.upsample2(h))
        h = ad.concat_channels(h, skips[i])
        h = ad.relu(conv(f"dec{i}_conv1", h))
        h = ad.relu(conv(f"dec{i}_conv2", h))
    return ad.tanh_act(conv("head", h))


def forward(state, batch):
    """Run inference on a (N, 1, H, W) batch, returning an array.

    H and W may be anything divisible by 2^depth; the network is fully
    convolutional, so frame_size only records the training resolution.
    """
    x = np.asarray(batch)
    if x.ndim != 4 or x.shape[1] != 1:
        raise ValueError(
            f"expected input shaped (batch, 1, height, width), "
            f"got {x.shape}")
    step = 1 << state.config.depth
    if x.shape[2] % step or x.shape[3] % step:
        raise ValueError(
            f"spatial size {x.shape[2]}x{x.shape[3]} is not divisible "
            f"by 2^depth = {step}")
    x = np.ascontiguousarray(x, dtype=np.float32)
    out = build_forward(wrap_params(state.params), state.config,
                        ad.Tensor(x))
    ad.release_graph(out)
    return out.data
