"""Accuracy metrics in physical units and cross-section extraction.

The two headline numbers are the L1 error and the RMSE of predicted
heights, both in nanometres: each sample's pixel differences are reduced
first (mean absolute, respectively mean squared), then averaged over
samples, with the square root applied last for RMSE. Per-sample values
are kept so outliers stay visible, and inference is timed per sample on
the calling thread.

Cross sections export one grid row as (x, height) pairs for external
plotting, the standard way to eyeball prediction quality along a scan
line.
"""

import time

from dataclasses import dataclass

import numpy as np

from . import unet
from .layout import Grid2D
from .preprocess import denormalize


@dataclass(frozen=True)
class Metrics:
    l1_nm: float
    rmse_nm: float
    sample_count: int
    per_sample: tuple
    seconds_per_sample: float


def _check_pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(
            f"shape mismatch: prediction {pred.shape} vs truth "
            f"{truth.shape}")
    if pred.ndim == 2:
        pred, truth = pred[None], truth[None]
    if pred.ndim != 3:
        raise ValueError(
            f"expected (samples, height, width) frames, got {pred.shape}")
    if pred.shape[0] == 0:
        raise ValueError("empty sample set")
    return pred, truth


def per_sample_l1(pred, truth):
    pred, truth = _check_pair(pred, truth)
    return np.abs(pred - truth).mean(axis=(1, 2))


def per_sample_rmse(pred, truth):
    pred, truth = _check_pair(pred, truth)
    return np.sqrt(((pred - truth) ** 2).mean(axis=(1, 2)))


def l1(pred, truth):
    """Mean over samples of the per-pixel mean absolute difference."""
    return float(per_sample_l1(pred, truth).mean())


def rmse(pred, truth):
    """Root of the mean over samples of the per-pixel mean squared error."""
    pred, truth = _check_pair(pred, truth)
    return float(np.sqrt(((pred - truth) ** 2).mean(axis=(1, 2)).mean()))


def compute_metrics(pred, truth, seconds_per_sample=0.0):
    ps_l1 = per_sample_l1(pred, truth)
    ps_rmse = per_sample_rmse(pred, truth)
    return Metrics(
        l1_nm=float(ps_l1.mean()),
        rmse_nm=rmse(pred, truth),
        sample_count=len(ps_l1),
        per_sample=tuple(zip(ps_l1.tolist(), ps_rmse.tolist())),
        seconds_per_sample=seconds_per_sample,
    )


def timed_predict(state, grid):
    """Predict heights in nm for a raster grid, returning (grid, seconds).

    Sizes not divisible by 2^depth are reflectively padded up and the
    prediction cropped back, so any raster works.
    """
    values = grid.values
    step = 1 << state.config.depth
    pad_h = -values.shape[0] % step
    pad_w = -values.shape[1] % step
    started = time.perf_counter()
    x = values.astype(np.float32)
    if pad_h or pad_w:
        x = np.pad(x, ((0, pad_h), (0, pad_w)), mode="reflect")
    out = unet.forward(state, x[None, None])[0, 0]
    out = out[:values.shape[0], :values.shape[1]]
    heights = denormalize(out.astype(np.float64), state.norm)
    elapsed = time.perf_counter() - started
    return Grid2D(pitch_nm=grid.pitch_nm, values=heights), elapsed


def evaluate(state, dataset, split="test"):
    """Metrics of state over one dataset split, denormalized to nm."""
    samples = dataset.split_samples(split)
    if not samples:
        raise ValueError(f"dataset has no {split} samples")
    preds = []
    truths = []
    total_time = 0.0
    for sample in samples:
        started = time.perf_counter()
        out = unet.forward(state, sample.input[None, None])[0, 0]
        pred_nm = denormalize(out.astype(np.float64), state.norm)
        total_time += time.perf_counter() - started
        preds.append(pred_nm)
        truths.append(denormalize(sample.target.astype(np.float64),
                                  dataset.norm))
    return compute_metrics(np.stack(preds), np.stack(truths),
                           seconds_per_sample=total_time / len(samples))


def cross_section(grid, row):
    """Heights along one row as (x_nm, height_nm) pairs at pixel centers."""
    if not 0 <= row < grid.height:
        raise ValueError(
            f"row {row} out of range for grid height {grid.height}")
    xs = (np.arange(grid.width) + 0.5) * grid.pitch_nm
    return list(zip(xs.tolist(), grid.values[row].tolist()))


def write_metrics_csv(metrics, destination):
    lines = ["sample,l1_nm,rmse_nm"]
    lines += [f"{i},{a:.9g},{b:.9g}"
              for i, (a, b) in enumerate(metrics.per_sample)]
    _write_lines(lines, destination)


def write_cross_section_csv(points, destination, points2=None):
    """CSV of one cross section, optionally paired with a second curve.

    The second curve must sample the same x positions; heights go into a
    third column so prediction and truth plot from one file.
    """
    if points2 is None:
        lines = ["x_nm,height_nm"]
        lines += [f"{x:.9g},{h:.9g}" for x, h in points]
    else:
        if len(points2) != len(points):
            raise ValueError(
                f"cross sections differ in length: {len(points)} vs "
                f"{len(points2)}")
        lines = ["x_nm,height_nm,height2_nm"]
        lines += [f"{x:.9g},{h:.9g},{h2:.9g}"
                  for (x, h), (_, h2) in zip(points, points2)]
    _write_lines(lines, destination)


def summary_line(metrics):
    return (f"L1={metrics.l1_nm:.4g}nm RMSE={metrics.rmse_nm:.4g}nm "
            f"n={metrics.sample_count} "
            f"t_inf={metrics.seconds_per_sample:.4g}s")


def _write_lines(lines, destination):
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
        return
    with open(destination, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
