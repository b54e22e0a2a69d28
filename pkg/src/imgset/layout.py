"""Token-span bookkeeping and the block-structured set-attention mask.

The key axis of joint attention is ordered [p_1, ..., p_n, g, v_1, ..., v_n]:
first every per-image prompt span, then the global prompt span, then every
image's visual span.  The query axis covers only the visual spans.  A
query row belonging to image k is unmasked exactly at its own prompt, the
global prompt, and all visual tokens; every other image's prompt is -inf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Span = tuple[int, int]  # half-open [start, stop)


@dataclass(frozen=True)
class TokenLayout:
    n: int
    prompt_spans: tuple[Span, ...]
    global_span: Span
    visual_spans: tuple[Span, ...]

    @property
    def n_prompt(self) -> int:
        return sum(b - a for a, b in self.prompt_spans)

    @property
    def n_global(self) -> int:
        return self.global_span[1] - self.global_span[0]

    @property
    def n_visual(self) -> int:
        return sum(b - a for a, b in self.visual_spans)

    @property
    def width(self) -> int:
        return self.n_prompt + self.n_global + self.n_visual

    def image_of_query(self, i: int) -> int:
        """Index of the image owning visual query row i."""
        base = self.n_prompt + self.n_global
        for k, (a, b) in enumerate(self.visual_spans):
            if a - base <= i < b - base:
                return k
        raise IndexError(f"query row {i} outside visual axis of length {self.n_visual}")


def build_token_layout(prompt_lens, global_len: int, visual_lens) -> TokenLayout:
    prompt_lens = [int(x) for x in prompt_lens]
    visual_lens = [int(x) for x in visual_lens]
    if len(prompt_lens) != len(visual_lens) or len(prompt_lens) < 1:
        raise ValueError(
            f"need matching non-empty prompt/visual length lists, got "
            f"{len(prompt_lens)} and {len(visual_lens)}"
        )
    if any(x < 1 for x in prompt_lens + visual_lens) or global_len < 1:
        raise ValueError("all span lengths must be >= 1")
    n = len(prompt_lens)
    spans = []
    pos = 0
    for length in prompt_lens:
        spans.append((pos, pos + length))
        pos += length
    global_span = (pos, pos + int(global_len))
    pos += int(global_len)
    visual_spans = []
    for length in visual_lens:
        visual_spans.append((pos, pos + length))
        pos += length
    return TokenLayout(
        n=n,
        prompt_spans=tuple(spans),
        global_span=global_span,
        visual_spans=tuple(visual_spans),
    )


def build_set_mask(layout: TokenLayout, dtype=np.float32) -> np.ndarray:
    """Additive mask (n_visual x width) with entries in {0, -inf}.

    Row i (a visual token of image k) is 0 at columns p_k, g and every
    visual span, -inf at all other images' prompts.
    """
    m = np.full((layout.n_visual, layout.width), -np.inf, dtype=dtype)
    vis_lo = layout.n_prompt + layout.n_global
    g0, g1 = layout.global_span
    base = vis_lo
    for k, (va, vb) in enumerate(layout.visual_spans):
        rows = slice(va - base, vb - base)
        pa, pb = layout.prompt_spans[k]
        m[rows, pa:pb] = 0.0
        m[rows, g0:g1] = 0.0
        m[rows, vis_lo:] = 0.0
    return m


def mask_entry_allowed(layout: TokenLayout, i: int, j: int) -> bool:
    """Independent per-entry predicate: is (query i, key j) unmasked?"""
    k = layout.image_of_query(i)
    pa, pb = layout.prompt_spans[k]
    g0, g1 = layout.global_span
    vis_lo = layout.n_prompt + layout.n_global
    return pa <= j < pb or g0 <= j < g1 or vis_lo <= j < layout.width


def format_mask_dump(layout: TokenLayout, mask: np.ndarray) -> str:
    """Plain-text mask dump: span header plus one '0'/'-' line per query row.

    Format (stable, used by golden-file tests):

        n=<n> N_p=<n_prompt> N_g=<n_global> N=<n_visual>
        p1=[a,b) ... g=[a,b) v1=[a,b) ...
        0000----000...
    """
    header = f"n={layout.n} N_p={layout.n_prompt} N_g={layout.n_global} N={layout.n_visual}"
    spans = " ".join(
        [f"p{k + 1}=[{a},{b})" for k, (a, b) in enumerate(layout.prompt_spans)]
        + [f"g=[{layout.global_span[0]},{layout.global_span[1]})"]
        + [f"v{k + 1}=[{a},{b})" for k, (a, b) in enumerate(layout.visual_spans)]
    )
    rows = ["".join("0" if np.isfinite(v) else "-" for v in row) for row in mask]
    return "\n".join([header, spans] + rows) + "\n"
