#!/usr/bin/env python3
"""Train the toy model on the colored-shapes corpus, then generate a set.

Training sees only single images; set behavior comes entirely from
inference-time joint attention.  After training, a two-image instruction
is recaptioned into per-image prompts and sampled with the default
divide-and-conquer schedule (2 divide steps out of 20).

Takes about half a minute on a laptop CPU.  Writes PNGs next to this file.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from imgset import Instruction, ModelConfig, Schedule, generate_set, recaption, train
from imgset.model import full_corpus
from imgset.model.data import NULL_ID
from imgset.recaption import tokenize_for_toy
from imgset.tensor import Rng

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

config = ModelConfig()
print("training 2000 steps on the 9-sample shapes corpus...")
params = train(config, full_corpus(), steps=2000, rng=Rng(0), log_every=500)

instruction = Instruction(
    text=(
        "the first image shows a red square; the second image shows a red circle. "
        "keep the same color."
    )
)
result = recaption(instruction)
print("per-image prompts:", result.prompts)
print("global prompt:    ", result.global_prompt)

prompt_ids = [tokenize_for_toy(p) for p in result.prompts]
g_ids = tokenize_for_toy(result.global_prompt) or [NULL_ID]
schedule = Schedule()  # 20 steps, 2 divide, guidance 3.5
images = generate_set(params, config, prompt_ids, g_ids, schedule, seed=0)

for i, img in enumerate(images):
    arr = (np.clip(img, 0, 1) * 255).round().astype(np.uint8)
    path = out_dir / f"shape_{i}.png"
    Image.fromarray(arr).resize((128, 128), Image.NEAREST).save(path)
    print("wrote", path)
