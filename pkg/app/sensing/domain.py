"""
Sensing Domain Types

pydantic models for the arrays that flow through the optical forward model:
mask sets, video cubes and measurements, plus the noise and quantization
settings. Validators enforce the structural invariants at construction time.
"""
from enum import Enum
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import sensing_defaults


class MaskScheme(str, Enum):
    RS = "rs"
    USS = "uss"


class MaskSet(BaseModel):
    """
    T modulation masks of shape [T, H, W].

    Ideal masks are binary and stored as uint8; degraded masks are float32 in
    [0, 1] with ``ideal`` cleared, which drops the USS one-hot guarantee.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    scheme: MaskScheme
    masks: np.ndarray
    seed: int = Field(default=0, ge=0, lt=2**64)
    density: Optional[float] = None
    ideal: bool = True

    @field_validator("masks")
    @classmethod
    def _three_dimensional(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.ndim != 3 or min(v.shape) < 1:
            raise ValueError(f"masks must have shape [T, H, W] with positive extents, got {v.shape}")
        return v

    @model_validator(mode="after")
    def _check_values(self) -> "MaskSet":
        if self.ideal:
            if not np.all((self.masks == 0) | (self.masks == 1)):
                raise ValueError("ideal masks must contain only 0 and 1")
            self.masks = self.masks.astype(np.uint8, copy=False)
        else:
            self.masks = self.masks.astype(np.float32, copy=False)
            if np.any(self.masks < 0) or np.any(self.masks > 1):
                raise ValueError("degraded mask values must lie in [0, 1]")
        return self

    @property
    def frames(self) -> int:
        return self.masks.shape[0]

    @property
    def extents(self) -> Tuple[int, int, int]:
        return self.masks.shape

    def coverage(self) -> np.ndarray:
        """Pixelwise sum of the masks over frames."""
        return self.masks.sum(axis=0, dtype=np.float64)


class VideoCube(BaseModel):
    """T grayscale frames of shape [T, H, W], nominally in [0, 1]."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    frames: np.ndarray

    @field_validator("frames")
    @classmethod
    def _three_dimensional(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.ndim != 3 or min(v.shape) < 1:
            raise ValueError(f"frames must have shape [T, H, W] with positive extents, got {v.shape}")
        if not np.issubdtype(v.dtype, np.floating):
            v = v.astype(np.float64)
        return v

    @property
    def extents(self) -> Tuple[int, int, int]:
        return self.frames.shape

    def clipped(self) -> "VideoCube":
        return VideoCube(frames=np.clip(self.frames, 0.0, 1.0))


class Measurement(BaseModel):
    """
    A single compressed frame [H, W].

    Analog measurements are unclipped floats. Quantized measurements hold
    integer codes together with the quantization settings that produced them.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray
    quantized: bool = False
    bits: Optional[int] = None
    full_scale: Optional[float] = None
    gain: Optional[float] = None
    saturation_fraction: Optional[float] = Field(default=None, ge=0.0, le=1.0)

    @field_validator("values")
    @classmethod
    def _two_dimensional(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.ndim != 2 or min(v.shape) < 1:
            raise ValueError(f"measurement must have shape [H, W], got {v.shape}")
        return v

    @model_validator(mode="after")
    def _check_codes(self) -> "Measurement":
        if self.quantized:
            if self.bits is None or self.full_scale is None or self.gain is None:
                raise ValueError("quantized measurements must carry bits, full_scale and gain")
            if np.any(self.values > 2**self.bits - 1) or np.any(self.values < 0):
                raise ValueError(f"codes must lie in [0, {2**self.bits - 1}]")
        return self

    @property
    def extents(self) -> Tuple[int, int]:
        return self.values.shape


class NoiseModel(BaseModel):
    kind: Literal["none", "gaussian"] = "none"
    sigma: float = Field(default=0.0, ge=0.0)
    seed: int = Field(default=0, ge=0)

    def sample(self, shape: Tuple[int, ...], dtype=np.float64) -> np.ndarray:
        """Additive read noise; zeros when the model is noiseless."""
        if self.kind == "none" or self.sigma == 0.0:
            return np.zeros(shape, dtype=dtype)
        rng = np.random.Generator(np.random.Philox(self.seed))
        return (self.sigma * rng.standard_normal(shape)).astype(dtype)


class QuantSpec(BaseModel):
    bits: int = sensing_defaults.QUANT_BITS
    full_scale: float = Field(default=1.0, gt=0.0)
    gain: float = Field(default=1.0, ge=0.0)

    @field_validator("bits")
    @classmethod
    def _supported_depth(cls, v: int) -> int:
        if v not in sensing_defaults.ALLOWED_BITS:
            raise ValueError(f"bits must be one of {sensing_defaults.ALLOWED_BITS}, got {v}")
        return v

    @property
    def top_code(self) -> int:
        return 2**self.bits - 1
