from .config import ModelConfig
from .data import (
    COLORS,
    NULL_ID,
    SHAPES,
    VOCAB,
    ShapeSample,
    full_corpus,
    render_shape,
)
from .net import (
    embed_prompt,
    forward_velocity,
    init_params,
    load_checkpoint,
    patchify,
    save_checkpoint,
    unpatchify,
    visual_coords,
)
from .posenc import rope_cos_sin, text_band_coords
from .train import TrainingDivergence, flow_matching_loss, loss_and_grads, train

__all__ = [
    "ModelConfig",
    "ShapeSample",
    "SHAPES",
    "COLORS",
    "VOCAB",
    "NULL_ID",
    "render_shape",
    "full_corpus",
    "init_params",
    "forward_velocity",
    "embed_prompt",
    "patchify",
    "unpatchify",
    "visual_coords",
    "save_checkpoint",
    "load_checkpoint",
    "rope_cos_sin",
    "text_band_coords",
    "flow_matching_loss",
    "loss_and_grads",
    "train",
    "TrainingDivergence",
]
