from typing import Dict, List, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import network_defaults
from app.errors import ShapeError

BRANCHES: Tuple[str, ...] = ("lba", "gsa", "gta")


class NetworkConfig(BaseModel):
    # Reconstruction network hyperparameters and expected input extents
    model_config = ConfigDict(extra="forbid", frozen=True)

    t: int = Field(ge=1)
    h: int = Field(ge=2)
    w: int = Field(ge=2)
    c: int = Field(ge=1)
    blocks: int = Field(default=2, ge=0)
    s: int = Field(default=4, ge=1)
    g: int = Field(default=4, ge=1)
    heads: int = Field(default=1, ge=1)
    leaky_slope: float = Field(default=network_defaults.LEAKY_SLOPE, gt=0.0, lt=1.0)
    lba: bool = True
    gsa: bool = True
    gta: bool = True

    @model_validator(mode="after")
    def _check_divisibility(self) -> "NetworkConfig":
        enabled = self.enabled_branches
        if not enabled:
            raise ValueError("at least one of lba, gsa, gta must be enabled")
        if self.c % len(enabled):
            raise ValueError(f"c={self.c} is not divisible by the {len(enabled)} enabled branches")
        if self.branch_channels % self.heads:
            raise ValueError(f"branch width {self.branch_channels} is not divisible by heads={self.heads}")
        self.check_extents(self.t, self.h, self.w)
        return self

    @property
    def enabled_branches(self) -> List[str]:
        return [name for name in BRANCHES if getattr(self, name)]

    @property
    def branch_channels(self) -> int:
        return self.c // len(self.enabled_branches)

    @property
    def head_width(self) -> int:
        return self.branch_channels // self.heads

    def check_extents(self, t: int, h: int, w: int) -> None:
        """Attention runs at half resolution, so H/2 and W/2 must tile by S and G."""
        if t < 1:
            raise ShapeError(f"need at least one frame, got t={t}")
        if h % 2 or w % 2:
            raise ShapeError(f"frame extents must be even, got {h}x{w}")
        if self.lba and ((h // 2) % self.s or (w // 2) % self.s):
            raise ShapeError(f"half-resolution extents {h // 2}x{w // 2} are not divisible by window size s={self.s}")
        if self.gsa and ((h // 2) % self.g or (w // 2) % self.g):
            raise ShapeError(f"half-resolution extents {h // 2}x{w // 2} are not divisible by grid count g={self.g}")

    @classmethod
    def toy(cls, **overrides) -> "NetworkConfig":
        return cls(**{**network_defaults.TOY, **overrides})

    @classmethod
    def full(cls, **overrides) -> "NetworkConfig":
        return cls(**{**network_defaults.FULL, **overrides})

    @classmethod
    def from_flat(cls, values: Dict[str, str]) -> "NetworkConfig":
        """Build from a key=value config file; unknown keys are rejected."""
        return cls(**values)
