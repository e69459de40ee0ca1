"""Model configuration."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .errors import ConfigError

VARIANTS = ("gaitmixer", "gaitformer")
PADDINGS = ("causal", "symmetric")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``d_model`` is the per-joint width used by both mixers and the head
    (d_x = d_y = c). ``temporal_padding="causal"`` prepends all K - 1
    reflected frames; ``"symmetric"`` splits them evenly.
    """

    joints: int = 17
    frames: int = 60
    d_model: int = 256
    heads: int = 8
    spatial_blocks: int = 4
    mlp_ratio: float = 4.0
    use_joint_embedding: bool = True
    kernel_size: int = 31
    temporal_blocks: int = 4
    temporal_padding: str = "causal"
    pad_mode: str = "reflect"
    temporal_heads: int = 8
    embed_dim: int = 128
    variant: str = "gaitmixer"

    def __post_init__(self):
        for name in ("joints", "frames", "d_model", "heads", "spatial_blocks", "kernel_size",
                     "temporal_blocks", "temporal_heads", "embed_dim"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"model.{name} must be positive")
        if self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "gaitformer" and self.d_model % self.temporal_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by "
                              f"temporal_heads={self.temporal_heads}")
        if self.temporal_padding not in PADDINGS:
            raise ConfigError(f"temporal_padding must be one of {PADDINGS}")
        if self.temporal_padding == "symmetric" and self.kernel_size % 2 == 0:
            raise ConfigError("symmetric temporal padding needs an odd kernel size")
        if self.mlp_ratio <= 0:
            raise ConfigError("mlp_ratio must be positive")

    @property
    def channels(self) -> int:
        """Flattened temporal channel count C = J * d."""
        return self.joints * self.d_model

    @property
    def mlp_hidden(self) -> int:
        return int(round(self.d_model * self.mlp_ratio))

    def padding(self):
        from .numerics import PaddingSpec
        if self.temporal_padding == "causal":
            return PaddingSpec.causal(self.kernel_size, self.pad_mode)
        return PaddingSpec.symmetric(self.kernel_size, self.pad_mode)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)
