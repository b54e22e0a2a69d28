"""2-D rotary position encoding over integer (row, col) token coordinates.

The encoding of a coordinate depends only on the coordinate itself, never
on tensor layout, so a token relocated to new grid coordinates simply
re-derives its angles.  Text tokens live in a reserved band of negative
rows (one band for per-image prompts, one for the global prompt) with
their in-span index as the column.
"""

from __future__ import annotations

import numpy as np

PROMPT_BAND_ROW = -1
GLOBAL_BAND_ROW = -2


def text_band_coords(length: int, band_row: int = PROMPT_BAND_ROW) -> np.ndarray:
    """Coordinates for a text span: (band_row, 0), (band_row, 1), ..."""
    coords = np.zeros((length, 2), dtype=np.int64)
    coords[:, 0] = band_row
    coords[:, 1] = np.arange(length)
    return coords


def rope_cos_sin(coords: np.ndarray, head_dim: int, base: float, dtype=np.float64):
    """Per-token cos/sin tables of shape (T, head_dim // 2).

    Split-half convention: the first half of each head's dims rotates with
    the row coordinate, the second half with the column coordinate.
    """
    if head_dim % 4 != 0:
        raise ValueError(f"head_dim must be divisible by 4, got {head_dim}")
    coords = np.asarray(coords, dtype=np.float64)
    quarter = head_dim // 4
    freqs = base ** (-np.arange(quarter, dtype=np.float64) / quarter)
    angles = np.concatenate(
        [coords[:, 0:1] * freqs[None, :], coords[:, 1:2] * freqs[None, :]], axis=1
    )  # (T, head_dim/2)
    return np.cos(angles).astype(dtype), np.sin(angles).astype(dtype)
