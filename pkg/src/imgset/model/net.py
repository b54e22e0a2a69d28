"""The toy multi-modal diffusion transformer.

Text and visual tokens meet through joint attention: queries come from the
visual stream only (a ``joint_text_queries`` switch enables the
conventional both-streams variant), keys/values come from per-image
prompts, the global prompt, and the visual tokens themselves, routed by an
additive mask.  The network predicts a per-token velocity.
"""

from __future__ import annotations

import json

import numpy as np

from .. import autodiff as ad
from ..autodiff import Var
from ..tensor import Rng, ShapeError
from .config import ModelConfig
from .posenc import GLOBAL_BAND_ROW, PROMPT_BAND_ROW, rope_cos_sin, text_band_coords

CHECKPOINT_VERSION = 1


# -- parameters --------------------------------------------------------


def init_params(config: ModelConfig, rng: Rng, dtype=np.float32) -> dict[str, np.ndarray]:
    d = config.d_model
    hidden = config.mlp_ratio * d

    def w(*shape):
        return (rng.randn(*shape, dtype=np.float64) * 0.02).astype(dtype)

    params = {
        "embed": w(config.prompt_vocab_size, d),
        "w_in": w(config.patch_dim, d),
        "b_in": np.zeros(d, dtype=dtype),
        "t_w": w(d, d),
        "t_b": np.zeros(d, dtype=dtype),
        "lnf_g": np.ones(d, dtype=dtype),
        "lnf_b": np.zeros(d, dtype=dtype),
        # Velocity head starts at zero so the initial field is the zero field.
        "w_head": np.zeros((d, config.patch_dim), dtype=dtype),
        "b_head": np.zeros(config.patch_dim, dtype=dtype),
    }
    for i in range(config.n_layers):
        p = f"l{i}_"
        params.update({
            p + "ln1_g": np.ones(d, dtype=dtype),
            p + "ln1_b": np.zeros(d, dtype=dtype),
            p + "wq": w(d, d),
            p + "wk_img": w(d, d),
            p + "wv_img": w(d, d),
            p + "wk_txt": w(d, d),
            p + "wv_txt": w(d, d),
            p + "wo": w(d, d),
            p + "ln2_g": np.ones(d, dtype=dtype),
            p + "ln2_b": np.zeros(d, dtype=dtype),
            p + "w1": w(d, hidden),
            p + "b1": np.zeros(hidden, dtype=dtype),
            p + "w2": w(hidden, d),
            p + "b2": np.zeros(d, dtype=dtype),
        })
    return params


def cast_params(params: dict[str, np.ndarray], dtype) -> dict[str, np.ndarray]:
    return {k: v.astype(dtype) for k, v in params.items()}


def save_checkpoint(path, config: ModelConfig, params: dict[str, np.ndarray]) -> None:
    """Versioned npz container: config as JSON plus flat parameter arrays.

    Round-trip load/save is bit-exact (npz stores raw array bytes).
    """
    meta = json.dumps({"version": CHECKPOINT_VERSION, "config": config.to_dict()})
    np.savez(path, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8), **params)


def load_checkpoint(path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version: {meta.get('version')}")
        params = {k: z[k] for k in z.files if k != "__meta__"}
    return ModelConfig.from_dict(meta["config"]), params


# -- token plumbing ----------------------------------------------------


def embed_prompt(params: dict[str, np.ndarray], token_ids) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size < 1:
        raise ShapeError("token_ids must be a non-empty 1-D sequence")
    table = params["embed"]
    if ids.min() < 0 or ids.max() >= table.shape[0]:
        raise ValueError(f"token id out of vocabulary range [0, {table.shape[0]})")
    return table[ids]


def patchify(image: np.ndarray, patch_side: int) -> np.ndarray:
    """(S, S, 3) image -> (tokens, patch_side*patch_side*3), row-major patches."""
    image = np.asarray(image)
    s = image.shape[0]
    if image.shape != (s, s, 3) or s % patch_side != 0:
        raise ShapeError(f"cannot patchify image of shape {image.shape} with patch {patch_side}")
    t = s // patch_side
    x = image.reshape(t, patch_side, t, patch_side, 3)
    x = x.transpose(0, 2, 1, 3, 4)
    return x.reshape(t * t, patch_side * patch_side * 3).copy()


def unpatchify(tokens: np.ndarray, patch_side: int) -> np.ndarray:
    tokens = np.asarray(tokens)
    n, pd = tokens.shape
    t = int(round(np.sqrt(n)))
    if t * t != n or pd != patch_side * patch_side * 3:
        raise ShapeError(f"cannot unpatchify tokens of shape {tokens.shape}")
    x = tokens.reshape(t, t, patch_side, patch_side, 3)
    x = x.transpose(0, 2, 1, 3, 4)
    return x.reshape(t * patch_side, t * patch_side, 3).copy()


def visual_coords(tokens_per_side: int, offset: tuple[int, int] = (0, 0)) -> np.ndarray:
    """(row, col) coordinate per visual token, row-major, plus a cell offset."""
    r, c = np.meshgrid(
        np.arange(tokens_per_side), np.arange(tokens_per_side), indexing="ij"
    )
    coords = np.stack([r.ravel() + offset[0], c.ravel() + offset[1]], axis=1)
    return coords.astype(np.int64)


def sinusoidal_time_embedding(t: float, dim: int, dtype) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    ang = 1000.0 * float(t) * freqs
    emb = np.concatenate([np.sin(ang), np.cos(ang)])
    if emb.size < dim:
        emb = np.concatenate([emb, np.zeros(dim - emb.size)])
    return emb.astype(dtype)


# -- forward pass ------------------------------------------------------


def _rope_apply(x: Var, cos: np.ndarray, sin: np.ndarray) -> Var:
    """Rotate (H, T, dk) head vectors by per-token angles (split-half pairs)."""
    dk = x.shape[-1]
    x1 = ad.slice_rows(x, 0, dk // 2, axis=2)
    x2 = ad.slice_rows(x, dk // 2, dk, axis=2)
    c, s = ad.as_var(cos[None, :, :]), ad.as_var(sin[None, :, :])
    return ad.concat_rows([x1 * c - x2 * s, x1 * s + x2 * c], axis=2)


def _heads(x: Var, n_heads: int) -> Var:
    t, d = x.shape
    return ad.transpose(ad.reshape(x, (t, n_heads, d // n_heads)), (1, 0, 2))


def _merge_heads(x: Var) -> Var:
    h, t, dk = x.shape
    return ad.reshape(ad.transpose(x, (1, 0, 2)), (t, h * dk))


def forward_graph(
    params: dict[str, Var],
    X: np.ndarray,
    P: Var,
    layout,
    mask: np.ndarray,
    t: float,
    vis_coords: np.ndarray,
    config: ModelConfig,
) -> Var:
    """Velocity prediction as an autodiff graph (shared by train and inference)."""
    dtype = X.dtype
    n_vis = X.shape[0]
    n_txt = P.shape[0]
    if X.shape != (layout.n_visual, config.patch_dim):
        raise ShapeError(
            f"visual tokens shape {X.shape} does not match layout "
            f"({layout.n_visual} x {config.patch_dim})"
        )
    if n_txt != layout.n_prompt + layout.n_global:
        raise ShapeError(
            f"prompt embeddings rows {n_txt} != layout text width "
            f"{layout.n_prompt + layout.n_global}"
        )
    if mask.shape != (n_vis, n_txt + n_vis):
        raise ShapeError(
            f"mask shape {mask.shape} != ({n_vis}, {n_txt + n_vis})"
        )
    if vis_coords.shape != (n_vis, 2):
        raise ShapeError(f"visual coords shape {vis_coords.shape} != ({n_vis}, 2)")

    text_coords = _text_coords(layout)
    dk = config.d_k
    cos_q, sin_q = rope_cos_sin(vis_coords, dk, config.rope_base, dtype)
    key_coords = np.concatenate([text_coords, vis_coords], axis=0)
    cos_k, sin_k = rope_cos_sin(key_coords, dk, config.rope_base, dtype)

    h = ad.as_var(X) @ params["w_in"] + params["b_in"]
    temb = sinusoidal_time_embedding(t, config.d_model, dtype)
    temb = ad.as_var(temb[None, :]) @ params["t_w"] + params["t_b"]
    h = h + temb

    p_h = P  # static text stream unless joint_text_queries
    inv_sqrt_dk = np.asarray(1.0 / np.sqrt(dk), dtype=dtype)
    joint = config.joint_text_queries
    if joint:
        text_mask = _joint_text_mask(layout, dtype)
        cos_t, sin_t = rope_cos_sin(text_coords, dk, config.rope_base, dtype)

    for i in range(config.n_layers):
        p = f"l{i}_"
        a = ad.layer_norm(h, params[p + "ln1_g"], params[p + "ln1_b"])
        q = _rope_apply(_heads(a @ params[p + "wq"], config.n_heads), cos_q, sin_q)
        k_txt = p_h @ params[p + "wk_txt"]
        v_txt = p_h @ params[p + "wv_txt"]
        k_img = a @ params[p + "wk_img"]
        v_img = a @ params[p + "wv_img"]
        k = _rope_apply(
            _heads(ad.concat_rows([k_txt, k_img]), config.n_heads), cos_k, sin_k
        )
        v = _heads(ad.concat_rows([v_txt, v_img]), config.n_heads)

        scores = ad.qk_scores(q, k) * ad.as_var(inv_sqrt_dk)
        w = ad.softmax_masked(scores, mask[None, :, :].astype(dtype))
        o = _merge_heads(ad.attn_values(w, v)) @ params[p + "wo"]
        h = h + o

        if joint:
            ta = ad.layer_norm(p_h, params[p + "ln1_g"], params[p + "ln1_b"])
            tq = _rope_apply(_heads(ta @ params[p + "wq"], config.n_heads), cos_t, sin_t)
            ts = ad.qk_scores(tq, k) * ad.as_var(inv_sqrt_dk)
            tw = ad.softmax_masked(ts, text_mask[None, :, :])
            p_h = p_h + _merge_heads(ad.attn_values(tw, v)) @ params[p + "wo"]
            tm = ad.layer_norm(p_h, params[p + "ln2_g"], params[p + "ln2_b"])
            p_h = p_h + ad.gelu(tm @ params[p + "w1"] + params[p + "b1"]) @ params[p + "w2"] + params[p + "b2"]

        m = ad.layer_norm(h, params[p + "ln2_g"], params[p + "ln2_b"])
        h = h + ad.gelu(m @ params[p + "w1"] + params[p + "b1"]) @ params[p + "w2"] + params[p + "b2"]

    out = ad.layer_norm(h, params["lnf_g"], params["lnf_b"])
    return out @ params["w_head"] + params["b_head"]


def _text_coords(layout) -> np.ndarray:
    parts = [
        text_band_coords(stop - start, PROMPT_BAND_ROW)
        for start, stop in layout.prompt_spans
    ]
    parts.append(text_band_coords(layout.n_global, GLOBAL_BAND_ROW))
    return np.concatenate(parts, axis=0)


def _joint_text_mask(layout, dtype) -> np.ndarray:
    """Mask rows for text queries in the joint-stream variant.

    A prompt token of image k attends to {p_k, g, all visual}; a global
    token attends to everything.
    """
    n_keys = layout.n_prompt + layout.n_global + layout.n_visual
    m = np.full((layout.n_prompt + layout.n_global, n_keys), -np.inf, dtype=dtype)
    vis_lo = layout.n_prompt + layout.n_global
    for (start, stop) in layout.prompt_spans:
        m[start:stop, start:stop] = 0.0
        m[start:stop, layout.global_span[0]:layout.global_span[1]] = 0.0
        m[start:stop, vis_lo:] = 0.0
    g0, g1 = layout.global_span
    m[g0:g1, :] = 0.0
    return m


def forward_velocity(
    params: dict[str, np.ndarray],
    X: np.ndarray,
    P: np.ndarray,
    layout,
    mask: np.ndarray,
    t: float,
    vis_coords: np.ndarray,
    config: ModelConfig,
) -> np.ndarray:
    """Predicted velocity per visual token (inference entry point)."""
    pvars = {k: ad.as_var(v) for k, v in params.items()}
    out = forward_graph(pvars, X, ad.as_var(P), layout, mask, t, vis_coords, config)
    return out.value
