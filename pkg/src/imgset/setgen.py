"""Divide-and-conquer set sampling.

Divide: each image gets an independent noise latent and is denoised alone,
bound only to its own prompt, for the first r steps.  Conquer: the latents
are concatenated into a grid, positions are re-derived at the new grid
coordinates, and the remaining steps run jointly under the set-attention
mask with classifier-free guidance.  Sets larger than five images are
processed in overlapping sliding windows of four (stride two); images
finalized by an earlier window are frozen and only serve as context.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .layout import (
    TokenLayout,
    build_set_mask,
    build_token_layout,
    format_mask_dump,
    mask_entry_allowed,
)
from .model.config import ModelConfig
from .model.data import NULL_ID
from .model.net import embed_prompt, forward_velocity, patchify, unpatchify, visual_coords
from .tensor import Rng, ShapeError

__all__ = [
    "TokenLayout",
    "build_token_layout",
    "build_set_mask",
    "mask_entry_allowed",
    "format_mask_dump",
    "GridLayout",
    "grid_layout_for",
    "sliding_windows",
    "concat_grid",
    "split_grid",
    "Schedule",
    "cfg_combine",
    "euler_step",
    "reference_sampler",
    "divide_phase",
    "conquer_phase",
    "generate_set",
    "FrozenLatentError",
]

WINDOW_SIZE = 4
WINDOW_STRIDE = 2


class FrozenLatentError(RuntimeError):
    """A latent finalized by an earlier window was modified again."""


@dataclass(frozen=True)
class Schedule:
    total_steps: int = 20
    divide_steps: int = 2
    guidance_scale: float = 3.5

    def __post_init__(self):
        if not (0 <= self.divide_steps <= self.total_steps):
            raise ValueError(
                f"divide_steps ({self.divide_steps}) must lie in "
                f"[0, total_steps={self.total_steps}]"
            )
        if self.guidance_scale < 0:
            raise ValueError(f"guidance_scale must be >= 0, got {self.guidance_scale}")

    @property
    def sigmas(self) -> np.ndarray:
        """Linear noise grid from 1 to 0 over total_steps steps."""
        return np.linspace(1.0, 0.0, self.total_steps + 1)


@dataclass(frozen=True)
class GridLayout:
    rows: int
    cols: int
    cell_tokens: int  # tokens per cell side; coordinates live in token units
    windows: tuple[tuple[int, ...], ...] | None = None

    @property
    def capacity(self) -> int:
        return self.rows * self.cols

    def cell_offset(self, cell_index: int) -> tuple[int, int]:
        r, c = divmod(cell_index, self.cols)
        return (r * self.cell_tokens, c * self.cell_tokens)


def sliding_windows(n: int, size: int = WINDOW_SIZE, stride: int = WINDOW_STRIDE):
    """Window index lists with the final start clamped to n - size."""
    if n <= size:
        return (tuple(range(n)),)
    starts = list(range(0, n - size, stride))
    if not starts or starts[-1] != n - size:
        starts.append(n - size)
    return tuple(tuple(range(s, s + size)) for s in starts)


def grid_layout_for(n: int, cell_tokens: int) -> GridLayout:
    """Grid policy: 1xn for n in {1,2,3,5}, 2x2 for n=4, sliding windows above 5."""
    if n < 1:
        raise ValueError(f"image count must be >= 1, got {n}")
    if n == 4:
        return GridLayout(2, 2, cell_tokens)
    if n <= 5:
        return GridLayout(1, n, cell_tokens)
    return GridLayout(2, 2, cell_tokens, windows=sliding_windows(n))


def concat_grid(latents, grid: GridLayout, cell_order=None):
    """Concatenate per-image token tensors in grid order.

    Returns the stacked tokens plus each token's (row, col) coordinate:
    in-cell coordinate shifted by the cell offset.  ``cell_order[i]`` maps
    image i to a grid cell (identity by default) so a permuted call can
    keep every image at its original coordinates.
    """
    if not latents:
        raise ShapeError("no latents to place")
    if len(latents) > grid.capacity:
        raise ShapeError(f"{len(latents)} latents exceed grid capacity {grid.capacity}")
    shapes = {tuple(np.asarray(x).shape) for x in latents}
    if len(shapes) != 1:
        raise ShapeError(f"latent shape mismatch: {sorted(shapes)}")
    cell_order = list(range(len(latents))) if cell_order is None else list(cell_order)
    if sorted(cell_order) != list(range(len(latents))):
        raise ValueError(f"cell_order must be a permutation, got {cell_order}")
    coords = []
    for i in range(len(latents)):
        coords.append(visual_coords(grid.cell_tokens, grid.cell_offset(cell_order[i])))
    return np.concatenate([np.asarray(x) for x in latents], axis=0), np.concatenate(coords, axis=0)


def split_grid(X: np.ndarray, grid: GridLayout, n: int):
    """Inverse of concat_grid: recover the per-image token tensors."""
    per = grid.cell_tokens**2
    if X.shape[0] != n * per:
        raise ShapeError(f"cannot split {X.shape[0]} tokens into {n} cells of {per}")
    return [X[i * per : (i + 1) * per].copy() for i in range(n)]


def cfg_combine(v_uncond: np.ndarray, v_cond: np.ndarray, s: float) -> np.ndarray:
    """Classifier-free guidance: v_uncond + s * (v_cond - v_uncond)."""
    if np.asarray(v_uncond).shape != np.asarray(v_cond).shape:
        raise ShapeError(
            f"cfg shape mismatch: {np.asarray(v_uncond).shape} vs {np.asarray(v_cond).shape}"
        )
    return v_uncond + s * (v_cond - v_uncond)


def euler_step(x: np.ndarray, v: np.ndarray, sigma_now: float, sigma_next: float) -> np.ndarray:
    if np.asarray(x).shape != np.asarray(v).shape:
        raise ShapeError(f"euler shape mismatch: {np.asarray(x).shape} vs {np.asarray(v).shape}")
    return x + (sigma_next - sigma_now) * v


def _guided_velocity(params, config, X, prompt_ids_list, g_ids, layout, mask, t, coords, scale):
    """CFG-combined velocity for one denoising step."""
    cond_ids = [tid for ids in prompt_ids_list for tid in ids] + list(g_ids)
    uncond_ids = [NULL_ID] * len(cond_ids)
    p_cond = embed_prompt(params, cond_ids).astype(X.dtype)
    p_uncond = embed_prompt(params, uncond_ids).astype(X.dtype)
    v_c = forward_velocity(params, X, p_cond, layout, mask, t, coords, config)
    v_u = forward_velocity(params, X, p_uncond, layout, mask, t, coords, config)
    return cfg_combine(v_u, v_c, scale)


def initial_noise(config: ModelConfig, seed: int, image_index: int, dtype=np.float32) -> np.ndarray:
    """Per-image noise tokens from an independent sub-stream of the master seed."""
    rng = Rng(seed).spawn(image_index)
    eps = rng.randn(config.image_side, config.image_side, 3, dtype=dtype)
    return patchify(eps, config.patch_side)


def reference_sampler(
    params,
    config: ModelConfig,
    prompt_ids,
    g_ids,
    schedule: Schedule,
    noise_tokens: np.ndarray,
    mask: np.ndarray | None = None,
    start_step: int = 0,
    stop_step: int | None = None,
) -> np.ndarray:
    """Plain single-image sampler used as the independent oracle.

    A straightforward loop with no grid machinery.  During the first
    ``divide_steps`` steps the global slot is a single null token (the
    global prompt binds nothing in the divide segment); afterwards the
    actual global prompt occupies its slot (pass ``g_ids=None`` for null
    throughout).  Returns final visual tokens.
    """
    per = config.tokens_per_image
    coords = visual_coords(config.tokens_per_side)
    sigmas = schedule.sigmas
    x = noise_tokens
    stop = schedule.total_steps if stop_step is None else stop_step
    for i in range(start_step, stop):
        use_global = i >= schedule.divide_steps and g_ids is not None and len(g_ids) > 0
        g = list(g_ids) if use_global else [NULL_ID]
        layout = build_token_layout([len(prompt_ids)], len(g), [per])
        step_mask = build_set_mask(layout) if mask is None else mask
        v = _guided_velocity(
            params, config, x, [list(prompt_ids)], g, layout, step_mask,
            float(sigmas[i]), coords, schedule.guidance_scale,
        )
        x = euler_step(x, v, float(sigmas[i]), float(sigmas[i + 1]))
    return x


def divide_phase(
    params,
    config: ModelConfig,
    prompt_ids_list,
    schedule: Schedule,
    seed: int,
    dtype=np.float32,
):
    """Independently denoise each image for the first r steps (no global prompt)."""
    sigmas = schedule.sigmas
    coords = visual_coords(config.tokens_per_side)
    out = []
    for i, prompt_ids in enumerate(prompt_ids_list):
        layout = build_token_layout([len(prompt_ids)], 1, [config.tokens_per_image])
        mask = build_set_mask(layout)
        x = initial_noise(config, seed, i, dtype=dtype)
        for step in range(schedule.divide_steps):
            v = _guided_velocity(
                params, config, x, [list(prompt_ids)], [NULL_ID], layout, mask,
                float(sigmas[step]), coords, schedule.guidance_scale,
            )
            x = euler_step(x, v, float(sigmas[step]), float(sigmas[step + 1]))
        out.append(x)
    return out


def _latent_digest(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(x).tobytes()).hexdigest()


def _conquer_window(
    params,
    config: ModelConfig,
    latents,
    prompt_ids_list,
    g_ids,
    grid: GridLayout,
    schedule: Schedule,
    frozen,
    mask_override=None,
    positional_mode="grid",
    cell_order=None,
):
    """Joint denoising of one window; frozen images are context only."""
    k = len(latents)
    per = config.tokens_per_image
    if positional_mode == "local":
        coords = np.concatenate([visual_coords(config.tokens_per_side)] * k, axis=0)
        X = np.concatenate([np.asarray(x) for x in latents], axis=0)
    elif positional_mode == "grid":
        X, coords = concat_grid(latents, grid, cell_order=cell_order)
    else:
        raise ValueError(f"unknown positional_mode {positional_mode!r}")

    layout = build_token_layout(
        [len(p) for p in prompt_ids_list], max(1, len(g_ids)), [per] * k
    )
    mask = build_set_mask(layout) if mask_override is None else mask_override
    g = list(g_ids) if g_ids else [NULL_ID]

    frozen_rows = np.zeros(k * per, dtype=bool)
    for i in frozen:
        frozen_rows[i * per : (i + 1) * per] = True
    frozen_digest = _latent_digest(X[frozen_rows])

    sigmas = schedule.sigmas
    for step in range(schedule.divide_steps, schedule.total_steps):
        v = _guided_velocity(
            params, config, X, prompt_ids_list, g, layout, mask,
            float(sigmas[step]), coords, schedule.guidance_scale,
        )
        v = np.where(frozen_rows[:, None], 0.0, v).astype(X.dtype)
        X = euler_step(X, v, float(sigmas[step]), float(sigmas[step + 1]))
        if _latent_digest(X[frozen_rows]) != frozen_digest:
            raise FrozenLatentError("frozen latents were modified during a window step")

    return split_grid(X, GridLayout(1, k, config.tokens_per_side), k)


def conquer_phase(
    params,
    config: ModelConfig,
    latents,
    prompt_ids_list,
    g_ids,
    grid: GridLayout,
    schedule: Schedule,
    mask_override=None,
    positional_mode="grid",
    cell_order=None,
):
    """Remaining denoising steps over the concatenated grid; returns images.

    With a sliding-window plan, windows run in order; images finalized by
    an earlier window act as frozen keys/values in later windows and are
    never updated again (checksum-asserted).
    """
    n = len(latents)
    if len(prompt_ids_list) != n:
        raise ShapeError(f"{n} latents but {len(prompt_ids_list)} prompts")
    latents = [np.asarray(x) for x in latents]

    if grid.windows is None:
        finals = _conquer_window(
            params, config, latents, prompt_ids_list, g_ids, grid, schedule,
            frozen=set(), mask_override=mask_override,
            positional_mode=positional_mode, cell_order=cell_order,
        )
    else:
        if mask_override is not None or cell_order is not None:
            raise ValueError("mask_override/cell_order are not supported with sliding windows")
        finals = list(latents)
        done: set[int] = set()
        for window in grid.windows:
            frozen_local = [j for j, idx in enumerate(window) if idx in done]
            sub = _conquer_window(
                params, config,
                [finals[idx] for idx in window],
                [prompt_ids_list[idx] for idx in window],
                g_ids, GridLayout(2, 2, grid.cell_tokens), schedule,
                frozen=set(frozen_local),
                positional_mode=positional_mode,
            )
            for j, idx in enumerate(window):
                if idx not in done:
                    finals[idx] = sub[j]
            done.update(window)
        if len(done) != n:
            raise FrozenLatentError(f"sliding windows covered {len(done)} of {n} images")

    return [unpatchify(x, config.patch_side) for x in finals]


def generate_set(
    params,
    config: ModelConfig,
    prompt_ids_list,
    g_ids,
    schedule: Schedule,
    seed: int,
    grid: GridLayout | None = None,
    dtype=np.float32,
):
    """Full divide-and-conquer pipeline from token prompts to images."""
    n = len(prompt_ids_list)
    grid = grid_layout_for(n, config.tokens_per_side) if grid is None else grid
    latents = divide_phase(params, config, prompt_ids_list, schedule, seed, dtype=dtype)
    if schedule.divide_steps == schedule.total_steps:
        return [unpatchify(x, config.patch_side) for x in latents]
    return conquer_phase(params, config, latents, prompt_ids_list, g_ids, grid, schedule)
