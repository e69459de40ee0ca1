"""Temporal padding specifications for the depthwise convolution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

MODES = ("zero", "reflect", "replicate")


@dataclass(frozen=True)
class PaddingSpec:
    """Frames added before (``left``) and after (``right``) the time axis."""

    left: int
    right: int
    mode: str = "reflect"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"padding mode must be one of {MODES}, got {self.mode!r}")
        if self.left < 0 or self.right < 0:
            raise ConfigError(f"padding amounts must be >= 0, got ({self.left}, {self.right})")

    @classmethod
    def causal(cls, kernel_size: int, mode: str = "reflect") -> "PaddingSpec":
        """All K - 1 frames prepended."""
        return cls(kernel_size - 1, 0, mode)

    @classmethod
    def symmetric(cls, kernel_size: int, mode: str = "reflect") -> "PaddingSpec":
        if kernel_size % 2 == 0:
            raise ConfigError(f"symmetric padding needs an odd kernel, got {kernel_size}")
        half = (kernel_size - 1) // 2
        return cls(half, half, mode)

    @property
    def total(self) -> int:
        return self.left + self.right

    def check_kernel(self, kernel_size: int) -> None:
        if self.total != kernel_size - 1:
            raise ConfigError(
                f"padding {self.left}+{self.right} does not preserve length for kernel "
                f"size {kernel_size} (needs {kernel_size - 1} frames in total)")

    def index_map(self, T: int) -> np.ndarray:
        """Source frame for every padded position; -1 marks a zero frame."""
        if T < 1:
            raise ConfigError("cannot pad an empty time axis")
        idx = np.arange(T)
        if self.mode == "zero":
            return np.concatenate([np.full(self.left, -1), idx, np.full(self.right, -1)])
        if self.mode == "replicate":
            return np.pad(idx, (self.left, self.right), mode="edge")
        if T == 1:
            return np.zeros(T + self.total, dtype=np.intp)
        # numpy reflects repeatedly when the pad exceeds the sequence
        return np.pad(idx, (self.left, self.right), mode="reflect")
