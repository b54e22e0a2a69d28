#!/usr/bin/env python3
"""Tour of the benchmark-corpus toolchain.

Loads the shipped 12-task sample corpus, prints its statistics, then
generates synthetic toy tasks whose instructions parse cleanly through the
rule-based recaption and map onto the toy model's vocabulary.
"""

import json

from imgset.bench import (
    corpus_stats,
    load_corpus,
    sample_corpus_path,
    synth_tasks,
    task_recaption,
)
from imgset.recaption import tokenize_for_toy

tasks = load_corpus(sample_corpus_path())
print(f"sample corpus: {len(tasks)} tasks")
print(json.dumps(corpus_stats(tasks), indent=2))

print()
print("first task:")
t = tasks[0]
print(f"  id={t.id} group={t.group!r} subcategory={t.subcategory!r} n={t.set_size}")
print(f"  {t.instruction[:110]}...")

print()
print("synthetic toy tasks (deterministic, seed 42):")
for t in synth_tasks(seed=42, count=3):
    r = task_recaption(t)
    ids = [tokenize_for_toy(p) for p in r.prompts]
    print(f"  {t.id}: n={t.set_size} token prompts={ids}")
