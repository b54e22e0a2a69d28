"""Synthetic colored-shapes corpus the toy model trains on.

Every sample is rendered deterministically from a (shape, color) pair on a
black background; filled pixels carry the pure color channel at 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NULL_ID = 0
SHAPES = {"square": 1, "circle": 2, "triangle": 3}
COLORS = {"red": 4, "green": 5, "blue": 6}
VOCAB = {"<null>": NULL_ID, **SHAPES, **COLORS}

_COLOR_CHANNEL = {"red": 0, "green": 1, "blue": 2}


@dataclass(frozen=True)
class ShapeSample:
    image: np.ndarray  # (side, side, 3) in [0, 1]
    prompt: tuple[int, int]  # (shape token id, color token id)
    shape: str
    color: str


def _square_mask(side: int) -> np.ndarray:
    # Reference geometry is stated at side 16 (rows/cols 4..11 inclusive)
    # and scales linearly with the image side.
    s = side / 16.0
    lo, hi = int(round(4 * s)), int(round(11 * s))
    m = np.zeros((side, side), dtype=bool)
    m[lo : hi + 1, lo : hi + 1] = True
    return m


def _circle_mask(side: int) -> np.ndarray:
    s = side / 16.0
    r, c = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    center = 7.5 * s
    radius = 5.0 * s
    # Center-of-pixel inclusion: pixel (r, c) has center (r, c).
    return (r - center) ** 2 + (c - center) ** 2 <= radius**2


def _triangle_mask(side: int) -> np.ndarray:
    s = side / 16.0
    # Vertices in (row, col): two on the right edge, apex pointing left.
    verts = [(3.0 * s, 13.0 * s), (12.0 * s, 13.0 * s), (7.5 * s, 3.0 * s)]

    def cross(o, a, p):
        return (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0])

    r, c = np.meshgrid(np.arange(side, dtype=float), np.arange(side, dtype=float), indexing="ij")
    m = np.ones((side, side), dtype=bool)
    centroid = (sum(v[0] for v in verts) / 3, sum(v[1] for v in verts) / 3)
    for i in range(3):
        o, a = verts[i], verts[(i + 1) % 3]
        side_c = cross(o, a, centroid)
        side_p = cross(o, a, (r, c))
        m &= side_p * side_c >= 0
    return m


_MASK_FN = {"square": _square_mask, "circle": _circle_mask, "triangle": _triangle_mask}


def render_shape(shape: str, color: str, side: int = 16) -> ShapeSample:
    """Deterministic rasterization of a pure-color shape on black."""
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; expected one of {sorted(SHAPES)}")
    if color not in COLORS:
        raise ValueError(f"unknown color {color!r}; expected one of {sorted(COLORS)}")
    img = np.zeros((side, side, 3), dtype=np.float64)
    img[_MASK_FN[shape](side), _COLOR_CHANNEL[color]] = 1.0
    return ShapeSample(
        image=img, prompt=(SHAPES[shape], COLORS[color]), shape=shape, color=color
    )


def full_corpus(side: int = 16) -> list[ShapeSample]:
    """All 9 (shape, color) combinations in a fixed order."""
    return [
        render_shape(shape, color, side)
        for shape in sorted(SHAPES)
        for color in sorted(COLORS)
    ]
