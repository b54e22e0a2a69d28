#!/usr/bin/env python3
"""Walk through the set-attention layout and mask for a 3-image set.

The key axis is ordered [p_1, p_2, p_3, g, v_1, v_2, v_3]; only visual
tokens ask questions.  Each image may read its own prompt, the shared
global prompt, and every image's visual tokens, but never another image's
prompt.
"""

from imgset import build_set_mask, build_token_layout, format_mask_dump

layout = build_token_layout(prompt_lens=[2, 1, 3], global_len=2, visual_lens=[4, 4, 4])

print("spans:")
for k, span in enumerate(layout.prompt_spans):
    print(f"  prompt {k + 1}: columns [{span[0]}, {span[1]})")
print(f"  global:   columns [{layout.global_span[0]}, {layout.global_span[1]})")
for k, span in enumerate(layout.visual_spans):
    print(f"  visual {k + 1}: columns [{span[0]}, {span[1]})")

print()
print("mask ('0' = attend, '-' = blocked):")
print(format_mask_dump(layout, build_set_mask(layout)))
