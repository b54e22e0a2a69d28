"""Rectified-flow training of the toy model on the colored-shapes corpus.

Objective: draw sigma ~ U(0,1) and eps ~ N(0,1), form
x_sigma = (1 - sigma) * x0 + sigma * eps and regress the velocity
v* = eps - x0 with mean squared error.  Optimizer is Adam
(beta1=0.9, beta2=0.999), lr 1e-3, 2000 steps by default.

Prompts are dropped to the null token during training (full-prompt drop
for classifier-free guidance, plus independent per-token drops) so the
model can condition on partial prompts at sampling time.
"""

from __future__ import annotations

import logging

import numpy as np

from .. import autodiff as ad
from ..layout import build_token_layout, build_set_mask
from ..tensor import Rng
from .config import ModelConfig
from .data import NULL_ID, ShapeSample
from .net import forward_graph, init_params, patchify, visual_coords

log = logging.getLogger(__name__)

FULL_DROP_P = 0.10
SHAPE_DROP_P = 0.10
COLOR_DROP_P = 0.30


class TrainingDivergence(RuntimeError):
    """Raised when the loss becomes non-finite during training."""


def single_image_layout(config: ModelConfig, prompt_len: int = None, global_len: int = 1):
    prompt_len = config.max_prompt_len if prompt_len is None else prompt_len
    layout = build_token_layout([prompt_len], global_len, [config.tokens_per_image])
    mask = build_set_mask(layout)
    return layout, mask


def flow_matching_graph(
    params_vars: dict[str, ad.Var],
    sample: ShapeSample,
    sigma: float,
    eps: np.ndarray,
    prompt_ids,
    config: ModelConfig,
) -> ad.Var:
    """Deterministic loss graph for a fixed (sigma, eps, prompt)."""
    dtype = eps.dtype
    x0 = patchify(sample.image.astype(dtype), config.patch_side)
    eps_tok = patchify(eps, config.patch_side)
    x_sigma = (1.0 - sigma) * x0 + sigma * eps_tok
    target = eps_tok - x0

    ids = list(prompt_ids) + [NULL_ID]  # trailing null fills the global slot
    layout, mask = single_image_layout(config, prompt_len=len(prompt_ids))
    coords = visual_coords(config.tokens_per_side)
    p_emb = ad.gather_rows(params_vars["embed"], ids)
    v = forward_graph(
        params_vars, x_sigma.astype(dtype), p_emb, layout, mask, sigma, coords, config
    )
    return ad.mean_squared_error(v, target.astype(dtype))


def flow_matching_loss(
    params: dict[str, np.ndarray],
    sample: ShapeSample,
    rng: Rng,
    config: ModelConfig,
    dtype=np.float32,
) -> float:
    """Single-sample loss with sigma and eps drawn from the stream."""
    sigma = rng.uniform()
    eps = rng.randn(config.image_side, config.image_side, 3, dtype=dtype)
    pvars = {k: ad.as_var(v) for k, v in params.items()}
    loss = flow_matching_graph(pvars, sample, sigma, eps, sample.prompt, config)
    return float(loss.value)


def loss_and_grads(
    params: dict[str, np.ndarray],
    sample: ShapeSample,
    sigma: float,
    eps: np.ndarray,
    prompt_ids,
    config: ModelConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    pvars = {k: ad.Var(v) for k, v in params.items()}
    loss = flow_matching_graph(pvars, sample, sigma, eps, prompt_ids, config)
    loss.backward()
    grads = {
        k: (v.grad if v.grad is not None else np.zeros_like(v.value))
        for k, v in pvars.items()
    }
    return float(loss.value), grads


def _dropped_prompt(prompt: tuple[int, int], rng: Rng) -> tuple[int, int]:
    if rng.uniform() < FULL_DROP_P:
        return (NULL_ID, NULL_ID)
    shape_id, color_id = prompt
    if rng.uniform() < SHAPE_DROP_P:
        shape_id = NULL_ID
    if rng.uniform() < COLOR_DROP_P:
        color_id = NULL_ID
    return (shape_id, color_id)


def train(
    config: ModelConfig,
    corpus: list[ShapeSample],
    steps: int = 2000,
    lr: float = 1e-3,
    rng: Rng | None = None,
    dtype=np.float32,
    params: dict[str, np.ndarray] | None = None,
    log_every: int = 200,
) -> dict[str, np.ndarray]:
    """Adam training loop over a deterministic sample stream."""
    if not corpus:
        raise ValueError("training corpus is empty")
    rng = rng if rng is not None else Rng(0)
    if params is None:
        params = init_params(config, rng, dtype=dtype)
    beta1, beta2, eps_adam = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
    s = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}

    for step in range(1, steps + 1):
        sample = corpus[rng.integers(0, len(corpus))]
        prompt = _dropped_prompt(sample.prompt, rng)
        sigma = rng.uniform()
        noise = rng.randn(config.image_side, config.image_side, 3, dtype=dtype)
        loss, grads = loss_and_grads(params, sample, sigma, noise, prompt, config)
        if not np.isfinite(loss):
            raise TrainingDivergence(f"non-finite loss {loss} at step {step}")
        for k in params:
            g = grads[k].astype(np.float64)
            m[k] = beta1 * m[k] + (1 - beta1) * g
            s[k] = beta2 * s[k] + (1 - beta2) * g * g
            m_hat = m[k] / (1 - beta1**step)
            s_hat = s[k] / (1 - beta2**step)
            params[k] = (
                params[k].astype(np.float64) - lr * m_hat / (np.sqrt(s_hat) + eps_adam)
            ).astype(dtype)
        if log_every and (step == 1 or step % log_every == 0):
            log.info("step %d loss %.5f", step, loss)
    return params
