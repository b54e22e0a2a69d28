from __future__ import annotations

from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the toy multi-modal diffusion transformer."""

    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    image_side: int = 16
    patch_side: int = 2
    prompt_vocab_size: int = 7
    max_prompt_len: int = 2
    max_global_len: int = 2
    mlp_ratio: int = 4
    rope_base: float = 100.0
    # When true, text tokens also act as queries and are updated per layer
    # (the conventional joint-stream variant); default keeps queries on the
    # visual stream only.
    joint_text_queries: bool = False

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        if self.image_side % self.patch_side != 0:
            raise ValueError(
                f"image_side ({self.image_side}) must be divisible by "
                f"patch_side ({self.patch_side})"
            )
        if self.d_k % 4 != 0:
            raise ValueError("per-head dim must be divisible by 4 for 2-D rotary")

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads

    @property
    def tokens_per_side(self) -> int:
        return self.image_side // self.patch_side

    @property
    def tokens_per_image(self) -> int:
        return self.tokens_per_side**2

    @property
    def patch_dim(self) -> int:
        return self.patch_side * self.patch_side * 3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)
