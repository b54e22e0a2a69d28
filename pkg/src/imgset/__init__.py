"""Text-to-image-set generation on a tiny trainable diffusion transformer.

The package covers the full loop: structured recaption of a natural-language
instruction into per-image and shared prompts, divide-and-conquer sampling
with a block-masked joint-attention mask, VLM-judged set scoring with
weighted holistic aggregation, and a benchmark-corpus toolchain.
"""

from .layout import (
    TokenLayout,
    build_set_mask,
    build_token_layout,
    format_mask_dump,
    mask_entry_allowed,
)
from .model import ModelConfig, load_checkpoint, save_checkpoint, train
from .setgen import (
    FrozenLatentError,
    GridLayout,
    Schedule,
    generate_set,
    grid_layout_for,
    reference_sampler,
    sliding_windows,
)
from .recaption import Instruction, RecaptionResult, recaption, tokenize_for_toy
from .evalkit import ScoreReport, evaluate_set, holistic, make_report
from .clients import HttpChatClient, MockChatClient, yes_probability
from .bench import Task, load_corpus, save_corpus, synth_tasks

__version__ = "0.1.0"

__all__ = [
    "TokenLayout",
    "build_set_mask",
    "build_token_layout",
    "format_mask_dump",
    "mask_entry_allowed",
    "ModelConfig",
    "load_checkpoint",
    "save_checkpoint",
    "train",
    "FrozenLatentError",
    "GridLayout",
    "Schedule",
    "generate_set",
    "grid_layout_for",
    "reference_sampler",
    "sliding_windows",
    "Instruction",
    "RecaptionResult",
    "recaption",
    "tokenize_for_toy",
    "ScoreReport",
    "evaluate_set",
    "holistic",
    "make_report",
    "HttpChatClient",
    "MockChatClient",
    "yes_probability",
    "Task",
    "load_corpus",
    "save_corpus",
    "synth_tasks",
    "__version__",
]
