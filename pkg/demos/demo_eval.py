#!/usr/bin/env python3
"""Score an image set with the evaluation pipeline, fully offline.

The pipeline asks yes/no questions per dimension (identity, style, logic
on sequential image pairs; entity, attribute, relation per image against
its prompt) and converts the judge's first-token Yes probability into a
graded score.  Here the judge and aesthetics scorer are deterministic
fixtures, so the arithmetic is easy to follow by hand.
"""

import numpy as np

from imgset.evalkit import FixtureAestheticsScorer, SequenceJudgeClient, evaluate_set

images = [np.full((16, 16, 3), v) for v in (0.2, 0.5, 0.8)]
prompts = ["a dark grey square", "a mid grey square", "a light grey square"]

criteria = {
    "identity": ["Do both images show the same subject?", "Is the subject unchanged?"],
    "style": ["Do both images share one rendering style?", "Is the palette consistent?"],
    "logic": ["Does the second image follow the first?", "Is the ordering coherent?"],
    "entity": ["Does the image show a square?", "Is exactly one object present?"],
    "attribute": ["Is the square the requested shade?", "Is the background plain?"],
    "relation": ["Is the square centered?", "Does the square fill the frame?"],
}

# consistency: 3 dims x 2 pairs x 2 criteria = 12 judgments, then
# alignment: 3 perspectives x 3 images x 2 criteria = 18 judgments
judge = SequenceJudgeClient([0.9] * 12 + [0.7] * 18)
scorer = FixtureAestheticsScorer([0.4, 0.5, 0.6])

report = evaluate_set(
    images, prompts, "three grey squares, light to dark", judge, scorer,
    criteria_fixtures=criteria,
)

print(report.to_json())
print()
print(report.to_table("fixture-demo"))
print("holistic = 0.2*aesthetics + 0.3*mean(alignment) + 0.5*mean(consistency)")
