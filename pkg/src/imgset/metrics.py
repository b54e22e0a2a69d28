"""Pixel-level consistency proxies for generated image sets."""

from __future__ import annotations

from itertools import combinations

import numpy as np

HIST_BINS = 8


def color_histogram(image: np.ndarray, bins: int = HIST_BINS) -> np.ndarray:
    """Concatenated per-channel histogram, normalized to sum 1 per channel."""
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {image.shape}")
    parts = []
    for ch in range(3):
        h, _ = np.histogram(image[:, :, ch], bins=bins, range=(0.0, 1.0))
        parts.append(h / max(1, image.shape[0] * image.shape[1]))
    return np.concatenate(parts)


def histogram_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Total-variation style distance: half the L1 gap, in [0, 3]."""
    return 0.5 * float(np.abs(color_histogram(a) - color_histogram(b)).sum())


def mean_pairwise_distance(images) -> float:
    """Mean color-histogram distance over all unordered image pairs."""
    images = list(images)
    if len(images) < 2:
        raise ValueError("need at least two images for a pairwise distance")
    dists = [histogram_distance(a, b) for a, b in combinations(images, 2)]
    return float(np.mean(dists))
