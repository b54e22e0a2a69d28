#!/usr/bin/env python3
"""Standalone corpus statistics, computed without importing the package.

Used to precompute the frozen expectations for the shipped sample corpus.
Run: python3 tools/compute_corpus_stats.py src/imgset/data/sample_corpus.json
"""

import json
import sys
from collections import Counter
from fractions import Fraction


def main(path):
    with open(path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    sizes = [e["set_size"] for e in entries]
    words = [len(e["instruction"].split()) for e in entries]
    by_group = Counter(e["group"] for e in entries)
    by_sub = Counter(e["subcategory"] for e in entries)
    # exact rational means, then decimal for the frozen test values
    mean_size = Fraction(sum(sizes), len(sizes))
    mean_words = Fraction(sum(words), len(words))
    print(json.dumps({
        "task_count": len(entries),
        "mean_set_size_exact": f"{mean_size.numerator}/{mean_size.denominator}",
        "mean_set_size": float(mean_size),
        "mean_word_count_exact": f"{mean_words.numerator}/{mean_words.denominator}",
        "mean_word_count": float(mean_words),
        "by_group": dict(sorted(by_group.items())),
        "by_subcategory": dict(sorted(by_sub.items())),
    }, indent=2))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/imgset/data/sample_corpus.json")
