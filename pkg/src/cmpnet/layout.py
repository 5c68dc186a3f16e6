"""Rectangle-based die layouts and their binary rasterization.

Layouts are axis-aligned copper rectangles in integer nanometers on an
oxide die. Rasterization samples pixel centers: a pixel is copper (1.0)
iff its center lies inside any rectangle, with half-open containment
``x0 <= px < x1`` so that abutting rectangles never double-count a
boundary pixel.
"""

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_PIXEL_BUDGET = 1 << 26

Rect = tuple[int, int, int, int]


class LayoutError(ValueError):
    """Malformed layout file content, reported with a 1-based line number."""


@dataclass(frozen=True)
class RectLayout:
    """A die extent plus copper rectangles, all in integer nanometers."""

    die_width: int
    die_height: int
    rects: tuple[Rect, ...]

    def __post_init__(self):
        if self.die_width <= 0 or self.die_height <= 0:
            raise ValueError(f"die extent must be positive, got "
                             f"{self.die_width}x{self.die_height}")
        for rect in self.rects:
            x0, y0, x1, y1 = rect
            if x0 >= x1 or y0 >= y1:
                raise ValueError(f"degenerate rectangle {rect}")
            if x0 < 0 or y0 < 0 or x1 > self.die_width or y1 > self.die_height:
                raise ValueError(f"rectangle {rect} outside die extent")


@dataclass
class Grid2D:
    """Dense row-major 2-D field sampled at ``pitch_nm`` nm per pixel.

    Row 0 corresponds to minimum y, column 0 to minimum x. Values are held
    as float64; binary rasters contain only 0.0 and 1.0.
    """

    pitch_nm: float
    values: np.ndarray

    def __post_init__(self):
        if self.pitch_nm <= 0:
            raise ValueError(f"pitch must be positive, got {self.pitch_nm}")
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.size == 0:
            raise ValueError("grid values must be a non-empty 2-D array")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))


def parse_layout(text: str) -> RectLayout:
    """Parse CMPRECT layout text into a :class:`RectLayout`.

    Format: line 1 ``CMPRECT 1``; line 2 ``DIE <width_nm> <height_nm>``;
    every following non-empty, non-``#`` line is ``<x0> <y0> <x1> <y1>``
    in integer nanometers. Rectangle order is preserved.
    """
    lines = text.splitlines()
    if len(lines) < 2:
        raise LayoutError("line 1: missing CMPRECT header")
    if lines[0].split() != ["CMPRECT", "1"]:
        raise LayoutError("line 1: expected 'CMPRECT 1' header")
    die_tokens = lines[1].split()
    if len(die_tokens) != 3 or die_tokens[0] != "DIE":
        raise LayoutError("line 2: expected 'DIE <width_nm> <height_nm>'")
    try:
        die_w, die_h = int(die_tokens[1]), int(die_tokens[2])
    except ValueError:
        raise LayoutError("line 2: non-integer die extent") from None
    if die_w <= 0 or die_h <= 0:
        raise LayoutError("line 2: die extent must be positive")

    rects: list[Rect] = []
    for lineno, line in enumerate(lines[2:], start=3):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) != 4:
            raise LayoutError(f"expected 4 coordinates at line {lineno}")
        try:
            x0, y0, x1, y1 = (int(t) for t in tokens)
        except ValueError:
            raise LayoutError(f"non-integer coordinate at line {lineno}") from None
        if x0 >= x1 or y0 >= y1:
            raise LayoutError(f"degenerate rectangle at line {lineno}")
        if x0 < 0 or y0 < 0 or x1 > die_w or y1 > die_h:
            raise LayoutError(f"rectangle outside die extent at line {lineno}")
        rects.append((x0, y0, x1, y1))
    return RectLayout(die_w, die_h, tuple(rects))


def _center_span(lo: int, hi: int, pitch: float, count: int) -> tuple[int, int]:
    """Index range [first, last_exclusive) of pixels whose centers
    (i+0.5)*pitch fall in [lo, hi). Resolved by evaluating the containment
    predicate directly so float rounding in the seed guess cannot shift a
    boundary pixel."""
    first = math.floor(lo / pitch - 0.5)
    while (first + 0.5) * pitch < lo:
        first += 1
    while first > 0 and (first - 0.5) * pitch >= lo:
        first -= 1
    last = math.ceil(hi / pitch - 0.5)
    while (last - 0.5) * pitch >= hi:
        last -= 1
    while (last + 0.5) * pitch < hi:
        last += 1
    return max(first, 0), min(last, count)


def rasterize(layout: RectLayout, pitch_nm: float,
              max_pixels: int = DEFAULT_PIXEL_BUDGET) -> Grid2D:
    """Rasterize a layout to a binary grid at ``pitch_nm`` nm per pixel.

    The grid covers the die with ``ceil(extent / pitch)`` pixels per axis;
    pixel centers beyond the die remain oxide (0.0).
    """
    if pitch_nm <= 0:
        raise ValueError(f"pitch must be positive, got {pitch_nm}")
    # ceil with a relative guard so exact integer ratios never round up
    h = math.ceil(layout.die_height / pitch_nm - 1e-9)
    w = math.ceil(layout.die_width / pitch_nm - 1e-9)
    h, w = max(h, 1), max(w, 1)
    if h * w > max_pixels:
        raise ValueError(f"grid {h}x{w} exceeds pixel budget {max_pixels}")
    values = np.zeros((h, w), dtype=np.float64)
    for x0, y0, x1, y1 in layout.rects:
        r0, r1 = _center_span(y0, y1, pitch_nm, h)
        c0, c1 = _center_span(x0, x1, pitch_nm, w)
        if r0 < r1 and c0 < c1:
            values[r0:r1, c0:c1] = 1.0
    return Grid2D(pitch_nm=pitch_nm, values=values)
