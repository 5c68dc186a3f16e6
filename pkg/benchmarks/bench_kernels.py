"""Timing comparison of the numba and numpy kernel backends.

Measures every hot kernel at the tensor shapes the default network
actually produces (depth 3, base 16 channels) for one minibatch, plus a
full forward/backward pass through the assembled model. Run it from the
repository root:

    python3 benchmarks/bench_kernels.py [--frame 64] [--batch 16]
        [--repeat 5]

Each cell reports the best wall time of --repeat runs after a warmup
call, so numba's one-off JIT compilation does not land in the table.
"""

import argparse
import time

import numpy as np

from cmpnet import autodiff as ad
from cmpnet import kernels, unet


def _best_time(fn, repeat):
    fn()  # warmup: JIT compile + cache touch
    best = float("inf")
    for _ in range(repeat):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def _conv_shapes(frame, batch, depth=3, base=16, kernel=3):
    """(label, x-shape, w-shape) per encoder/decoder level, no duplicates."""
    shapes = []
    size = frame
    c_in = 1
    for level in range(depth):
        c_out = base << level
        shapes.append((f"conv {size}x{size} {c_in}->{c_out}",
                       (batch, c_in, size, size),
                       (c_out, c_in, kernel, kernel)))
        c_in = c_out
        size //= 2
    shapes.append((f"conv {size}x{size} {c_in}->{c_in * 2}",
                   (batch, c_in, size, size),
                   (c_in * 2, c_in, kernel, kernel)))
    return shapes


def bench_kernels(frame, batch, repeat, rng):
    rows = []
    for label, x_shape, w_shape in _conv_shapes(frame, batch):
        x = rng.normal(size=x_shape).astype(np.float32)
        w = rng.normal(size=w_shape).astype(np.float32)
        b = rng.normal(size=w_shape[0]).astype(np.float32)
        gy_shape = (x_shape[0], w_shape[0], x_shape[2], x_shape[3])
        gy = rng.normal(size=gy_shape).astype(np.float32)
        kh, kw = w_shape[2], w_shape[3]
        per_backend = {}
        for backend in kernels.available_backends():
            with kernels.use_backend(backend):
                per_backend[backend] = (
                    _best_time(lambda: kernels.conv2d_forward(x, w, b),
                               repeat),
                    _best_time(lambda: kernels.conv2d_backward_input(gy, w),
                               repeat),
                    _best_time(
                        lambda: kernels.conv2d_backward_weight(x, gy, kh, kw),
                        repeat),
                )
        for i, stage in enumerate(("fwd", "bwd_in", "bwd_w")):
            rows.append((f"{label} {stage}",
                         {k: v[i] for k, v in per_backend.items()}))

    x = rng.normal(size=(batch, 16, frame, frame)).astype(np.float32)
    per_backend = {}
    for backend in kernels.available_backends():
        with kernels.use_backend(backend):
            y, idx = kernels.maxpool2_forward(x)
            gy = np.ones_like(y)
            per_backend[backend] = (
                _best_time(lambda: kernels.maxpool2_forward(x), repeat),
                _best_time(lambda: kernels.maxpool2_backward(gy, idx),
                           repeat),
            )
    for i, stage in enumerate(("fwd", "bwd")):
        rows.append((f"maxpool {frame}x{frame}x16 {stage}",
                     {k: v[i] for k, v in per_backend.items()}))
    return rows


def bench_model(frame, batch, repeat, rng):
    config = unet.UNetConfig(frame_size=frame)
    state = unet.init(config, seed=0)
    x = rng.normal(size=(batch, 1, frame, frame)).astype(np.float32)
    y = rng.normal(size=(batch, 1, frame, frame)).astype(np.float32)
    tensors = unet.wrap_params(state.params)

    def step():
        ad.zero_gradients(tensors.values())
        out = unet.build_forward(tensors, config, ad.Tensor(x))
        loss = ad.mse_loss(out, y)
        ad.backward(loss)
        ad.release_graph(loss)

    per_backend = {}
    for backend in kernels.available_backends():
        with kernels.use_backend(backend):
            per_backend[backend] = _best_time(step, repeat)
    return [(f"model step {frame}x{frame} batch {batch}", per_backend)]


def print_table(rows):
    backends = sorted(rows[0][1])
    width = max(len(label) for label, _ in rows) + 2
    header = "".join(f"{b + ' [ms]':>14}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(f"{'kernel':<{width}}{header}")
    for label, times in rows:
        cells = "".join(f"{times[b] * 1e3:>14.3f}" for b in backends)
        if len(backends) > 1:
            ratio = times["numpy"] / times["numba"]
            cells += f"{ratio:>9.1f}x"
        print(f"{label:<{width}}{cells}")


def main():
    parser = argparse.ArgumentParser(
        description="Compare kernel backend speeds.")
    parser.add_argument("--frame", type=int, default=64,
                        help="spatial size of the benchmark batch")
    parser.add_argument("--batch", type=int, default=16,
                        help="batch size")
    parser.add_argument("--repeat", type=int, default=5,
                        help="timed repetitions per cell (best is kept)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"backends available: {', '.join(kernels.available_backends())}")
    rows = bench_kernels(args.frame, args.batch, args.repeat, rng)
    rows += bench_model(args.frame, args.batch, args.repeat, rng)
    print_table(rows)


if __name__ == "__main__":
    main()
