import numpy as np
import pytest

from cmpnet.layout import (DEFAULT_PIXEL_BUDGET, Grid2D, LayoutError,
                           RectLayout, parse_layout, rasterize)

VALID = """CMPRECT 1
DIE 100 80

# copper features
10 20 30 40
0 0 100 5
"""


def test_parse_valid_layout():
    layout = parse_layout(VALID)
    assert layout.die_width == 100
    assert layout.die_height == 80
    assert layout.rects == ((10, 20, 30, 40), (0, 0, 100, 5))


def test_parse_skips_blank_and_comment_lines():
    assert len(parse_layout(VALID).rects) == 2


def test_parse_empty_layout_has_no_rects():
    assert parse_layout("CMPRECT 1\nDIE 5 5\n").rects == ()


@pytest.mark.parametrize("text, message", [
    ("", "line 1: missing CMPRECT header"),
    ("CMPRECT 2\nDIE 10 10\n", "line 1: expected 'CMPRECT 1' header"),
    ("RECTS 1\nDIE 10 10\n", "line 1: expected 'CMPRECT 1' header"),
    ("CMPRECT 1\nDIE 10\n", "line 2: expected 'DIE <width_nm> <height_nm>'"),
    ("CMPRECT 1\nSIZE 10 10\n", "line 2: expected 'DIE <width_nm> <height_nm>'"),
    ("CMPRECT 1\nDIE ten 10\n", "line 2: non-integer die extent"),
    ("CMPRECT 1\nDIE 0 10\n", "line 2: die extent must be positive"),
    ("CMPRECT 1\nDIE 10 10\n1 2 3\n", "expected 4 coordinates at line 3"),
    ("CMPRECT 1\nDIE 10 10\n1 2 3 4 5\n", "expected 4 coordinates at line 3"),
    ("CMPRECT 1\nDIE 10 10\n1 2 3 x\n", "non-integer coordinate at line 3"),
    ("CMPRECT 1\nDIE 10 10\n1.5 2 3 4\n", "non-integer coordinate at line 3"),
    ("CMPRECT 1\nDIE 10 10\n3 2 3 4\n", "degenerate rectangle at line 3"),
    ("CMPRECT 1\nDIE 10 10\n1 4 3 4\n", "degenerate rectangle at line 3"),
    ("CMPRECT 1\nDIE 10 10\n1 2 11 4\n",
     "rectangle outside die extent at line 3"),
    ("CMPRECT 1\nDIE 10 10\n-1 2 3 4\n",
     "rectangle outside die extent at line 3"),
    ("CMPRECT 1\nDIE 10 10\n\n# ok\n1 2 3 oops\n",
     "non-integer coordinate at line 5"),
])
def test_parse_errors(text, message):
    with pytest.raises(LayoutError) as excinfo:
        parse_layout(text)
    assert str(excinfo.value) == message


def test_rect_layout_validation():
    with pytest.raises(ValueError):
        RectLayout(0, 10, ())
    with pytest.raises(ValueError):
        RectLayout(10, 10, ((2, 2, 2, 4),))
    with pytest.raises(ValueError):
        RectLayout(10, 10, ((0, 0, 11, 4),))


def test_grid2d_validation():
    with pytest.raises(ValueError):
        Grid2D(pitch_nm=0.0, values=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        Grid2D(pitch_nm=1.0, values=np.zeros(4))
    with pytest.raises(ValueError):
        Grid2D(pitch_nm=1.0, values=np.zeros((0, 2)))


def test_grid2d_is_binary():
    assert Grid2D(1.0, np.array([[0.0, 1.0], [1.0, 0.0]])).is_binary()
    assert not Grid2D(1.0, np.array([[0.0, 0.5], [1.0, 0.0]])).is_binary()


def test_rasterize_known_pixels():
    layout = RectLayout(4, 3, ((1, 0, 3, 2),))
    grid = rasterize(layout, 1.0)
    expected = np.array([
        [0, 1, 1, 0],
        [0, 1, 1, 0],
        [0, 0, 0, 0],
    ], dtype=np.float64)
    assert grid.values.shape == (3, 4)
    np.testing.assert_array_equal(grid.values, expected)
    assert grid.pitch_nm == 1.0


def test_rasterize_finer_pitch_scales_area():
    layout = RectLayout(4, 4, ((1, 1, 3, 3),))
    coarse = rasterize(layout, 1.0)
    fine = rasterize(layout, 0.5)
    assert fine.values.shape == (8, 8)
    assert coarse.values.sum() == 4
    assert fine.values.sum() == 16


def test_rasterize_half_open_abutting_rects():
    merged = rasterize(RectLayout(4, 2, ((0, 0, 4, 2),)), 1.0)
    split = rasterize(RectLayout(4, 2, ((0, 0, 2, 2), (2, 0, 4, 2))), 1.0)
    np.testing.assert_array_equal(merged.values, split.values)
    assert split.values.sum() == 8


def test_rasterize_center_sampling():
    # pixel center (1.0, 1.0) at pitch 2 lies outside [0, 1) x [0, 1)
    layout = RectLayout(2, 2, ((0, 0, 1, 1),))
    assert rasterize(layout, 2.0).values.sum() == 0
    layout = RectLayout(2, 2, ((0, 0, 2, 2),))
    assert rasterize(layout, 2.0).values.sum() == 1


def test_rasterize_exact_integer_ratio():
    layout = RectLayout(10, 10, ())
    assert rasterize(layout, 0.1).values.shape == (100, 100)
    assert rasterize(layout, 2.0).values.shape == (5, 5)
    assert rasterize(layout, 3.0).values.shape == (4, 4)


def test_rasterize_pixel_budget():
    layout = RectLayout(1000, 1000, ())
    with pytest.raises(ValueError, match="pixel budget"):
        rasterize(layout, 1.0, max_pixels=100)
    assert DEFAULT_PIXEL_BUDGET >= 4096 * 4096


def test_rasterize_bad_pitch():
    with pytest.raises(ValueError, match="pitch"):
        rasterize(RectLayout(4, 4, ()), 0.0)


def test_rasterize_matches_center_predicate_brute_force():
    rng = np.random.default_rng(7)
    for pitch in (1.0, 0.75, 2.0):
        rects = []
        for _ in range(12):
            x0, y0 = rng.integers(0, 28, 2)
            x1 = x0 + rng.integers(1, 29 - x0)
            y1 = y0 + rng.integers(1, 29 - y0)
            rects.append((int(x0), int(y0), int(x1), int(y1)))
        layout = RectLayout(29, 31, tuple(rects))
        grid = rasterize(layout, pitch)
        for r in range(grid.height):
            for c in range(grid.width):
                cx = (c + 0.5) * pitch
                cy = (r + 0.5) * pitch
                inside = any(x0 <= cx < x1 and y0 <= cy < y1
                             for x0, y0, x1, y1 in rects)
                assert grid.values[r, c] == (1.0 if inside else 0.0), (
                    f"pixel ({r}, {c}) at pitch {pitch}")
