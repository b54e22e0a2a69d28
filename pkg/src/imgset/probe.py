"""Consistency probe used by the step-ratio sweep and end-to-end checks.

Four images are prompted with a shape but no color, under the shared-color
global prompt (which tokenizes to the null token in the toy vocabulary, so
all harmonization must come from joint attention).  The proxy metric is
the mean pairwise color-histogram distance of the resulting set: lower
means a more color-consistent set.
"""

from __future__ import annotations

import numpy as np

from .metrics import mean_pairwise_distance
from .model.config import ModelConfig
from .model.data import NULL_ID, SHAPES
from .recaption import tokenize_for_toy
from .setgen import Schedule, generate_set

PROBE_SHAPES = ("square", "circle", "triangle", "square")
PROBE_GLOBAL_TEXT = "keep the same color"


def probe_prompts(n: int = 4):
    prompts = [[SHAPES[s]] for s in PROBE_SHAPES]
    while len(prompts) < n:
        prompts.append([SHAPES[PROBE_SHAPES[len(prompts) % len(PROBE_SHAPES)]]])
    return prompts[:n]


def shared_color_probe(
    params,
    config: ModelConfig,
    schedule: Schedule,
    seed: int,
    n: int = 4,
) -> float:
    """Mean pairwise color-histogram distance of one generated set."""
    g_ids = tokenize_for_toy(PROBE_GLOBAL_TEXT)
    assert g_ids == [NULL_ID]  # no color leak through the global prompt
    images = generate_set(params, config, probe_prompts(n), g_ids, schedule, seed)
    return mean_pairwise_distance(images)


def sweep_step_ratios(params, config, ratios, seeds, guidance_scale: float = 3.5, n: int = 4):
    """Median probe distance per (divide, total) ratio over the given seeds."""
    results = {}
    for divide, total in ratios:
        schedule = Schedule(total_steps=total, divide_steps=divide, guidance_scale=guidance_scale)
        dists = [shared_color_probe(params, config, schedule, seed, n=n) for seed in seeds]
        results[f"{divide}:{total}"] = {
            "median": float(np.median(dists)),
            "mean": float(np.mean(dists)),
            "distances": [float(d) for d in dists],
        }
    return results
