"""Dataset construction: smoothing, normalization, tiling, split, augmentation.

The flow mirrors the measurement pipeline: the target height map is
smoothed to suppress sub-resolution noise, the layout/target pair is cut
into square subframes, base frames are split train/test before
augmentation (so augmented copies of a test frame can never leak into
training), target statistics are fitted on the train split only, and
every base frame is expanded into its 8 square-symmetry variants.
"""

from dataclasses import dataclass, field

import numpy as np

from .layout import Grid2D

RNG_NAME = "numpy-pcg64"
NUM_DIHEDRAL = 8


class DataError(ValueError):
    """Inconsistent or unreadable dataset directory contents."""


@dataclass(frozen=True)
class SmoothingConfig:
    """Mean-filter kernel extents in pixels; both must be odd."""

    m: int = 5
    n: int = 5

    def __post_init__(self):
        if self.m < 1 or self.n < 1 or self.m % 2 == 0 or self.n % 2 == 0:
            raise ValueError(f"kernel extents must be odd and >= 1, got "
                             f"{self.m}x{self.n}")


@dataclass(frozen=True)
class NormStats:
    """Target min/max in nanometers, fitted on training targets only."""

    min: float
    max: float

    def __post_init__(self):
        if self.max < self.min:
            raise ValueError(f"max {self.max} < min {self.min}")


@dataclass
class Sample:
    """One augmented frame pair with its provenance."""

    input: np.ndarray
    target: np.ndarray
    origin: tuple[int, int]
    aug_id: int
    split: str
    base_index: int


@dataclass
class DataSet:
    """All frame pairs of one run plus the statistics needed to invert them."""

    frame_size: int
    samples: list[Sample]
    norm: NormStats
    seed: int
    pitch_nm: float = 1.0
    stride: int = 0
    test_fraction: float = 0.2
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)

    def split_samples(self, split: str) -> list[Sample]:
        return [s for s in self.samples if s.split == split]


def smooth(grid: Grid2D, cfg: SmoothingConfig) -> Grid2D:
    """Mean-filter a grid over an m x n neighborhood, clamping at edges.

    Out-of-bounds neighbors take the value of the nearest in-bounds pixel,
    so output dimensions equal input dimensions.
    """
    h, w = grid.values.shape
    if cfg.m > h or cfg.n > w:
        raise ValueError(f"kernel {cfg.m}x{cfg.n} larger than grid {h}x{w}")
    padded = np.pad(grid.values, ((cfg.m // 2,) * 2, (cfg.n // 2,) * 2),
                    mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (cfg.m, cfg.n))
    return Grid2D(pitch_nm=grid.pitch_nm, values=windows.mean(axis=(-2, -1)))


def fit_norm(frames) -> NormStats:
    """Min/max over every pixel of the given target frames."""
    frames = list(frames)
    if not frames or sum(f.size for f in frames) == 0:
        raise ValueError("cannot fit normalization statistics on no pixels")
    lo = min(float(np.min(f)) for f in frames)
    hi = max(float(np.max(f)) for f in frames)
    return NormStats(min=lo, max=hi)


def normalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Affinely map [min, max] onto [-1, 1]; values outside the fitted
    range map outside [-1, 1] and are not clipped. Degenerate stats
    (max == min) map everything to 0."""
    if stats.max == stats.min:
        return np.zeros_like(np.asarray(values, dtype=np.float64))
    return 2.0 * (values - stats.min) / (stats.max - stats.min) - 1.0


def denormalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Inverse of :func:`normalize`; with degenerate stats every input
    maps back to the single fitted value."""
    if stats.max == stats.min:
        return np.full_like(np.asarray(values, dtype=np.float64), stats.min)
    return (values + 1.0) * (stats.max - stats.min) / 2.0 + stats.min


def apply_dihedral(frame: np.ndarray, transform_id: int) -> np.ndarray:
    """Apply one of the 8 symmetries of the square to a square frame.

    0 identity; 1-3 counterclockwise rotations by 90/180/270; 4 horizontal
    flip (reverses each row); 5 vertical flip; 6-7 the flips composed with
    a 90-degree rotation (the two diagonal reflections).
    """
    if not 0 <= transform_id < NUM_DIHEDRAL:
        raise ValueError(f"transform id must be 0..7, got {transform_id}")
    if frame.ndim != 2 or frame.shape[0] != frame.shape[1]:
        raise ValueError(f"frame must be square, got {frame.shape}")
    if transform_id == 0:
        out = frame
    elif transform_id <= 3:
        out = np.rot90(frame, k=transform_id)
    elif transform_id == 4:
        out = np.fliplr(frame)
    elif transform_id == 5:
        out = np.flipud(frame)
    elif transform_id == 6:
        out = np.rot90(np.fliplr(frame))
    else:
        out = np.rot90(np.flipud(frame))
    return np.ascontiguousarray(out)


# transform composed with its inverse is the identity; rotations pair up,
# every reflection is its own inverse
DIHEDRAL_INVERSE = (0, 3, 2, 1, 4, 5, 6, 7)


def augment(input_frame: np.ndarray, target_frame: np.ndarray,
            transform_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Apply the same square symmetry to an aligned frame pair."""
    return (apply_dihedral(input_frame, transform_id),
            apply_dihedral(target_frame, transform_id))


def tile(input_grid: Grid2D, target_grid: Grid2D, frame_size: int,
         stride: int) -> list[tuple[np.ndarray, np.ndarray, tuple[int, int]]]:
    """Cut aligned grids into frame_size x frame_size pairs at origins
    (r*stride, c*stride), keeping only fully contained frames."""
    if input_grid.values.shape != target_grid.values.shape:
        raise ValueError(f"input {input_grid.values.shape} and target "
                         f"{target_grid.values.shape} dimensions differ")
    h, w = input_grid.values.shape
    if frame_size > min(h, w):
        raise ValueError(f"frame {frame_size} larger than grid {h}x{w}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    frames = []
    for r in range(0, h - frame_size + 1, stride):
        for c in range(0, w - frame_size + 1, stride):
            frames.append((input_grid.values[r:r + frame_size, c:c + frame_size],
                           target_grid.values[r:r + frame_size, c:c + frame_size],
                           (r, c)))
    return frames


def split_labels(count: int, test_fraction: float, seed: int) -> np.ndarray:
    """Boolean test mask over base frames: exactly round(count * fraction)
    are test, chosen by a seeded shuffle."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test fraction must be in (0, 1), got {test_fraction}")
    if count < 2:
        raise ValueError(f"need at least 2 base frames, got {count}")
    n_test = round(count * test_fraction)
    order = np.random.default_rng(seed).permutation(count)
    mask = np.zeros(count, dtype=bool)
    mask[order[:n_test]] = True
    return mask


def build_dataset(input_grid: Grid2D, target_grid: Grid2D, frame_size: int,
                  stride: int, test_fraction: float, seed: int,
                  smoothing: SmoothingConfig = SmoothingConfig()) -> DataSet:
    """Run the full preprocessing chain on one layout/target grid pair."""
    if not input_grid.is_binary():
        raise DataError("input grid must be a binary raster")
    smoothed = smooth(target_grid, smoothing)
    base = tile(input_grid, smoothed, frame_size, stride)
    is_test = split_labels(len(base), test_fraction, seed)
    norm = fit_norm([t for (_, t, _), test in zip(base, is_test) if not test])

    samples = []
    for index, ((in_frame, out_frame, origin), test) in enumerate(zip(base, is_test)):
        out_norm = normalize(out_frame, norm)
        for aug_id in range(NUM_DIHEDRAL):
            a_in, a_out = augment(in_frame, out_norm, aug_id)
            samples.append(Sample(input=a_in.astype(np.float32),
                                  target=a_out.astype(np.float32),
                                  origin=origin, aug_id=aug_id,
                                  split="test" if test else "train",
                                  base_index=index))
    return DataSet(frame_size=frame_size, samples=samples, norm=norm,
                   seed=seed, pitch_nm=input_grid.pitch_nm, stride=stride,
                   test_fraction=test_fraction, smoothing=smoothing)
