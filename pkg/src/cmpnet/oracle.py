"""Synthetic post-polish topography for rasterized layouts.

Real ground truth for this task is a proprietary interferometry scan, so
the pipeline ships a physically plausible stand-in: polishing removes more
material where the smoothed local copper density is high (erosion, a
long-range effect set by the planarization scale sigma), plus a small
per-pixel recess inside copper features (dishing) and optional seeded
measurement noise. Heights are negative, in nanometres, with 0 meaning
untouched oxide.

The law is height = -max_erosion * blur(raster, sigma) - dishing * raster
+ noise. With noise off it commutes with the 8 dihedral symmetries, which
keeps the augmentation stage physically consistent on synthetic data.
"""

import math

from dataclasses import dataclass

import numpy as np

from .layout import Grid2D


@dataclass(frozen=True)
class OracleConfig:
    planarization_sigma: float = 8.0
    max_erosion_nm: float = 40.0
    dishing_amp_nm: float = 3.0
    noise_amp_nm: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.planarization_sigma <= 0:
            raise ValueError(
                f"planarization_sigma must be > 0, "
                f"got {self.planarization_sigma}")
        if self.max_erosion_nm <= 0:
            raise ValueError(
                f"max_erosion_nm must be > 0, got {self.max_erosion_nm}")
        if self.dishing_amp_nm < 0:
            raise ValueError(
                f"dishing_amp_nm must be >= 0, got {self.dishing_amp_nm}")
        if self.noise_amp_nm < 0:
            raise ValueError(
                f"noise_amp_nm must be >= 0, got {self.noise_amp_nm}")


def _kernel(sigma):
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _blur_axis(values, kernel, axis):
    radius = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(values, pad, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(
        padded, len(kernel), axis=axis)
    return windows @ kernel


def gaussian_blur(grid, sigma):
    """Separable Gaussian smoothing, truncated at radius ceil(3 sigma).

    Kernel weights are renormalized to sum to one and borders clamp to
    the edge value, so a constant grid passes through unchanged. Accepts
    a Grid2D or a bare 2-d array and returns the same kind.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if isinstance(grid, Grid2D):
        return Grid2D(pitch_nm=grid.pitch_nm,
                      values=gaussian_blur(grid.values, sigma))
    values = np.asarray(grid, dtype=np.float64)
    kernel = _kernel(sigma)
    return _blur_axis(_blur_axis(values, kernel, 0), kernel, 1)


def generate(raster, cfg):
    """Height map in nm for a binary copper raster under config cfg."""
    if not raster.is_binary():
        raise ValueError("oracle input must be a binary raster")
    density = gaussian_blur(raster.values, cfg.planarization_sigma)
    height = (-cfg.max_erosion_nm * density
              - cfg.dishing_amp_nm * raster.values)
    if cfg.noise_amp_nm > 0:
        rng = np.random.default_rng(cfg.seed)
        height = height + rng.uniform(-cfg.noise_amp_nm, cfg.noise_amp_nm,
                                      height.shape)
    return Grid2D(pitch_nm=raster.pitch_nm, values=height)


def sidecar_lines(cfg):
    """key=value provenance lines for the oracle.txt sidecar manifest."""
    return [
        f"planarization_sigma={cfg.planarization_sigma!r}",
        f"max_erosion_nm={cfg.max_erosion_nm!r}",
        f"dishing_amp_nm={cfg.dishing_amp_nm!r}",
        f"noise_amp_nm={cfg.noise_amp_nm!r}",
        f"seed={cfg.seed}",
    ]
