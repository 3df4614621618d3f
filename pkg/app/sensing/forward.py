"""
Optical Forward Model

Modulation and temporal integration of a video cube into one measurement,
sensor read noise, ADC quantization with saturation, the vectorized
sensing-matrix form, the decomposition of ideal USS measurements into masked
sub-frames, and the normalized coarse estimate fed to the network.

Vectorization is row-major over (H, W) everywhere; the stacked video vector is
[vec(X_1); ...; vec(X_T)].
"""
import io
import logging
from typing import List, Optional

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, field_validator

from app.config import sensing_defaults
from app.core.container import load_tensor, read_sidecar, save_tensor, write_sidecar, atomic_write_bytes
from app.errors import ConfigError, DecompositionError, FormatError, ShapeError
from app.sensing.domain import MaskScheme, MaskSet, Measurement, NoiseModel, QuantSpec, VideoCube

logger = logging.getLogger(__name__)

DENSE_LIMIT = 4096


class SensingMatrix(BaseModel):
    """
    Block-diagonal sensing matrix Phi = [D_1, ..., D_T] stored by its diagonals.

    ``diagonals[t]`` is vec(M_t). The dense n x nT form is only available for
    n <= 4096.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    diagonals: np.ndarray
    height: int
    width: int

    @field_validator("diagonals")
    @classmethod
    def _two_dimensional(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.ndim != 2:
            raise ValueError(f"diagonals must have shape [T, n], got {v.shape}")
        return v

    @property
    def frames(self) -> int:
        return self.diagonals.shape[0]

    @property
    def pixels(self) -> int:
        return self.diagonals.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Phi x for a stacked video vector of length n*T."""
        if x.shape != (self.frames * self.pixels,):
            raise ShapeError(f"expected a vector of length {self.frames * self.pixels}, got shape {x.shape}")
        blocks = x.reshape(self.frames, self.pixels)
        y = np.zeros(self.pixels, dtype=np.result_type(x.dtype, np.float32))
        for t in range(self.frames):
            y += self.diagonals[t] * blocks[t]
        return y

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """Phi^T y, a stacked video vector."""
        if y.shape != (self.pixels,):
            raise ShapeError(f"expected a vector of length {self.pixels}, got shape {y.shape}")
        return (self.diagonals * y[None, :]).reshape(-1)

    def gram_diagonal(self) -> np.ndarray:
        """Diagonal of Phi Phi^T (which is diagonal): sum_t M_t^2 per pixel."""
        d = self.diagonals.astype(np.float64)
        return (d * d).sum(axis=0)

    def dense(self) -> np.ndarray:
        if self.pixels > DENSE_LIMIT:
            raise ShapeError(f"refusing to materialize a dense {self.pixels} x {self.pixels * self.frames} matrix")
        return np.concatenate([np.diag(d.astype(np.float64)) for d in self.diagonals], axis=1)


def _check_match(x: VideoCube, m: MaskSet) -> None:
    if x.extents != m.extents:
        raise ShapeError(f"video extents {x.extents} do not match mask extents {m.extents}")


def encode(x: VideoCube, m: MaskSet, noise: Optional[NoiseModel] = None) -> Measurement:
    """Y = sum_t X_t * M_t + G, analog and unclipped."""
    _check_match(x, m)
    noise = noise or NoiseModel()
    y = np.zeros(x.extents[1:], dtype=np.result_type(x.frames.dtype, np.float32))
    for t in range(m.frames):
        y += m.masks[t] * x.frames[t]
    y += noise.sample(y.shape, dtype=y.dtype)
    return Measurement(values=y)


def quantize(y: Measurement, q: QuantSpec) -> Measurement:
    """
    ADC model: codes = clip(round(gain * y / full_scale * (2^bits - 1)), 0, 2^bits - 1).

    saturation_fraction is the share of pixels whose rounded code exceeded the top code.
    """
    if y.quantized:
        raise ConfigError("quantize expects an analog measurement")
    scaled = np.rint(q.gain * y.values.astype(np.float64) / q.full_scale * q.top_code)
    saturation = float(np.mean(scaled > q.top_code))
    dtype = np.uint8 if q.bits == 8 else np.uint16
    codes = np.clip(scaled, 0, q.top_code).astype(dtype)
    if saturation > 0:
        logger.debug("Quantization at gain %.3g saturated %.1f%% of pixels", q.gain, 100 * saturation)
    return Measurement(
        values=codes,
        quantized=True,
        bits=q.bits,
        full_scale=q.full_scale,
        gain=q.gain,
        saturation_fraction=saturation,
    )


def dequantize(y: Measurement) -> Measurement:
    """Map codes back to analog scene units: codes / (2^bits - 1) * full_scale / gain."""
    if not y.quantized:
        return y
    if not y.gain:
        raise ConfigError("cannot dequantize a measurement taken at zero gain")
    analog = y.values.astype(np.float64) / (2**y.bits - 1) * y.full_scale / y.gain
    return Measurement(values=analog)


def build_sensing_matrix(m: MaskSet) -> SensingMatrix:
    frames, height, width = m.extents
    return SensingMatrix(diagonals=m.masks.reshape(frames, height * width), height=height, width=width)


def vectorize(x: VideoCube) -> np.ndarray:
    return x.frames.reshape(-1)


def vectorized_encode(x: VideoCube, phi: SensingMatrix, noise: Optional[NoiseModel] = None) -> np.ndarray:
    """y = Phi x + g; equals vec(encode(x, m, noise)) exactly for the same noise seed."""
    frames, height, width = x.extents
    if (frames, height * width) != phi.diagonals.shape:
        raise ShapeError(f"video {x.extents} does not match sensing matrix {phi.diagonals.shape}")
    noise = noise or NoiseModel()
    y = phi.apply(vectorize(x))
    return y + noise.sample((height, width), dtype=y.dtype).reshape(-1)


def decompose_uss(y: Measurement, m: MaskSet) -> List[Measurement]:
    """
    Split an ideal USS measurement into its T masked sub-frames Y_t = Y * M_t.

    Raises:
        DecompositionError: on RS or degraded masks, where the sub-frames are
            not separable
    """
    if m.scheme != MaskScheme.USS or not m.ideal:
        raise DecompositionError(
            f"decomposition needs ideal USS masks, got scheme={m.scheme.value} ideal={m.ideal}"
        )
    if y.extents != m.extents[1:]:
        raise ShapeError(f"measurement {y.extents} does not match masks {m.extents[1:]}")
    values = y.values if not y.quantized else y.values.astype(np.float64)
    return [Measurement(values=values * m.masks[t]) for t in range(m.frames)]


def coarse_estimate(y: Measurement, m: MaskSet) -> VideoCube:
    """
    Energy-normalized initialization X_e,t = Ybar * M_t + Ybar with Ybar = Y / sum_t M_t.

    Quantized measurements are dequantized first. The denominator is clamped
    below at COVERAGE_EPS so uncovered pixels stay finite.
    """
    y = dequantize(y)
    if y.extents != m.extents[1:]:
        raise ShapeError(f"measurement {y.extents} does not match masks {m.extents[1:]}")
    coverage = m.coverage()
    clamped = coverage < sensing_defaults.COVERAGE_EPS
    if np.any(clamped):
        logger.warning("Clamped %d pixels with no mask coverage", int(clamped.sum()))
    ybar = y.values / np.maximum(coverage, sensing_defaults.COVERAGE_EPS)
    ybar = ybar.astype(np.result_type(y.values.dtype, np.float32))
    return VideoCube(frames=ybar[None] * m.masks + ybar[None])


def normalize_for_display(y: Measurement) -> np.ndarray:
    """Scale a measurement by its own maximum into [0, 1]."""
    values = y.values.astype(np.float64)
    peak = values.max()
    return values / peak if peak > 0 else values


def save_measurement(y: Measurement, path: str) -> None:
    save_tensor(path, y.values if y.quantized else y.values.astype(np.float32))
    record = {"quantized": str(y.quantized).lower()}
    if y.quantized:
        record.update(bits=y.bits, full_scale=repr(y.full_scale), gain=repr(y.gain), saturation=repr(y.saturation_fraction))
    write_sidecar(path, record)


def load_measurement(path: str) -> Measurement:
    values = load_tensor(path)
    record = read_sidecar(path)
    try:
        if record.get("quantized") == "true":
            return Measurement(
                values=values,
                quantized=True,
                bits=int(record["bits"]),
                full_scale=float(record["full_scale"]),
                gain=float(record["gain"]),
                saturation_fraction=float(record["saturation"]),
            )
        return Measurement(values=values)
    except (KeyError, ValueError) as e:
        raise FormatError(f"invalid measurement record for {path}: {e}", 0)


def export_png(y: Measurement, path: str, normalize: bool = False) -> None:
    """Write an 8-bit grayscale PNG; other measurements are normalized by their maximum."""
    if y.quantized and y.bits == 8 and not normalize:
        pixels = y.values.astype(np.uint8)
    else:
        pixels = np.rint(np.clip(normalize_for_display(y), 0.0, 1.0) * 255).astype(np.uint8)
    buffer = io.BytesIO()
    Image.fromarray(pixels).save(buffer, format="PNG")
    atomic_write_bytes(path, buffer.getvalue())
