#!/usr/bin/env python3
"""Measure how joint attention harmonizes colors across a set.

Four images are prompted with shapes only (no color).  The more steps run
jointly (conquer), the more the per-image colors agree; with a fully
independent schedule each image picks its color from its own noise.  The
proxy is the mean pairwise color-histogram distance (lower = more
consistent).

Takes a few minutes: trains once, then samples 5 seeds per schedule.
"""

from imgset import ModelConfig, train
from imgset.model import full_corpus
from imgset.probe import sweep_step_ratios
from imgset.tensor import Rng

config = ModelConfig()
print("training 2000 steps...")
params = train(config, full_corpus(), steps=2000, rng=Rng(0), log_every=500)

ratios = [(2, 20), (6, 20), (20, 20)]
results = sweep_step_ratios(params, config, ratios, seeds=range(5))
print()
print("divide:total  median pairwise color distance")
for key, stats in results.items():
    print(f"  {key:>9}  {stats['median']:.4f}")
print()
print("(20:20 = fully independent images; 2:20 = default joint schedule)")
