"""
Mask Generation and Validation

Random-sampling (RS) masks draw every entry independently; ultra-sparse
sampling (USS) masks pick exactly one active frame per pixel, so the mask stack
sums to the all-one matrix. Generation uses a counter-based Philox stream
seeded by the mask seed, so the same seed always yields the same set.
"""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import ndimage

from app.config import sensing_defaults
from app.core.container import load_tensor, read_sidecar, save_tensor, write_sidecar
from app.errors import ConfigError, FormatError, ShapeError
from app.sensing.domain import MaskScheme, MaskSet

logger = logging.getLogger(__name__)


class MaskReport(BaseModel):
    passed: bool
    binary: bool
    one_hot_checked: bool
    fill_fractions: List[float]
    violation_count: int = Field(ge=0)
    first_violation: Optional[Tuple[int, int]] = None

    @model_validator(mode="after")
    def _pass_iff_no_violations(self) -> "MaskReport":
        if self.passed != (self.violation_count == 0):
            raise ValueError("passed must be true exactly when there are no violations")
        return self


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _check_extents(frames: int, height: int, width: int) -> None:
    if frames < 1 or height < 1 or width < 1:
        raise ShapeError(f"mask extents must be positive, got T={frames}, H={height}, W={width}")


def gen_rs(frames: int, height: int, width: int, density: float = sensing_defaults.RS_DENSITY, seed: int = 0) -> MaskSet:
    """i.i.d. Bernoulli(density) masks."""
    _check_extents(frames, height, width)
    if not 0.0 < density < 1.0:
        raise ConfigError(f"density must be in (0, 1), got {density}")
    draws = _generator(seed).random((frames, height, width))
    return MaskSet(scheme=MaskScheme.RS, masks=(draws < density).astype(np.uint8), seed=seed, density=density)


def gen_uss(frames: int, height: int, width: int, seed: int = 0) -> MaskSet:
    """One uniformly chosen active frame per pixel."""
    _check_extents(frames, height, width)
    active = _generator(seed).integers(0, frames, size=(height, width))
    masks = (np.arange(frames)[:, None, None] == active[None]).astype(np.uint8)
    return MaskSet(scheme=MaskScheme.USS, masks=masks, seed=seed)


def validate(m: MaskSet) -> MaskReport:
    """
    Check binarity of ideal masks and, for ideal USS sets, the one-hot property.

    Findings go into the report; nothing is raised.
    """
    masks = m.masks
    fills = [float(f) for f in masks.reshape(m.frames, -1).mean(axis=1)]
    bad = np.zeros(masks.shape[1:], dtype=bool)
    binary = bool(np.all((masks == 0) | (masks == 1)))
    if m.ideal and not binary:
        bad |= np.any((masks != 0) & (masks != 1), axis=0)
    one_hot_checked = m.scheme == MaskScheme.USS and m.ideal
    if one_hot_checked:
        bad |= masks.sum(axis=0, dtype=np.int64) != 1
    count = int(bad.sum())
    first = tuple(int(i) for i in np.argwhere(bad)[0]) if count else None
    if count:
        logger.info("Mask set (%s) has %d violating pixels, first at %s", m.scheme.value, count, first)
    return MaskReport(
        passed=count == 0,
        binary=binary,
        one_hot_checked=one_hot_checked,
        fill_fractions=fills,
        violation_count=count,
        first_violation=first,
    )


def degrade(m: MaskSet, blur_sigma: float = 0.0, shift: Tuple[float, float] = (0.0, 0.0)) -> MaskSet:
    """
    Emulate optical misalignment: truncated Gaussian blur then bilinear subpixel shift.

    Both steps are convex combinations with zero fill outside the plane, so
    values stay in [0, 1]. The result is marked non-ideal.

    Raises:
        ConfigError: negative blur_sigma
        ShapeError: blur kernel wider than the mask plane
    """
    if blur_sigma < 0:
        raise ConfigError(f"blur_sigma must be >= 0, got {blur_sigma}")
    planes = m.masks.astype(np.float64)
    if blur_sigma > 0:
        radius = math.ceil(sensing_defaults.BLUR_TRUNCATE * blur_sigma)
        if 2 * radius + 1 > min(planes.shape[1:]):
            raise ShapeError(f"blur kernel of width {2 * radius + 1} exceeds mask plane {planes.shape[1:]}")
        planes = ndimage.gaussian_filter(
            planes, sigma=(0.0, blur_sigma, blur_sigma), mode="constant", cval=0.0, truncate=sensing_defaults.BLUR_TRUNCATE
        )
    dy, dx = shift
    if dy != 0.0 or dx != 0.0:
        planes = ndimage.shift(planes, (0.0, dy, dx), order=1, mode="constant", cval=0.0)
    return MaskSet(
        scheme=m.scheme,
        masks=np.clip(planes, 0.0, 1.0).astype(np.float32),
        seed=m.seed,
        density=m.density,
        ideal=False,
    )


def save_masks(m: MaskSet, path: str) -> None:
    """STNS payload [T, H, W] (u8 ideal, f32 degraded) plus a key=value sidecar."""
    save_tensor(path, m.masks)
    frames, height, width = m.extents
    write_sidecar(
        path,
        {
            "scheme": m.scheme.value,
            "seed": m.seed,
            "density": "" if m.density is None else repr(m.density),
            "ideal": str(m.ideal).lower(),
            "frames": frames,
            "height": height,
            "width": width,
        },
    )


def load_masks(path: str) -> MaskSet:
    """
    Inverse of save_masks.

    Raises:
        FormatError: corrupt payload, missing sidecar, or a sidecar that
            disagrees with the payload shape or dtype
    """
    masks = load_tensor(path)
    record = read_sidecar(path)
    try:
        scheme = MaskScheme(record["scheme"])
        ideal = record["ideal"] == "true"
        declared = (int(record["frames"]), int(record["height"]), int(record["width"]))
        seed = int(record["seed"])
        density = float(record["density"]) if record.get("density") else None
    except (KeyError, ValueError) as e:
        raise FormatError(f"invalid mask sidecar for {path}: {e}", 0)
    if masks.ndim != 3 or masks.shape != declared:
        raise FormatError(f"{scheme.value} sidecar declares shape {declared} but payload is {masks.shape}", 0)
    if ideal != (masks.dtype == np.uint8):
        raise FormatError(f"ideal={ideal} does not match payload dtype {masks.dtype}", 0)
    try:
        return MaskSet(scheme=scheme, masks=masks, seed=seed, density=density, ideal=ideal)
    except ValueError as e:
        raise FormatError(f"mask payload rejected: {e}", 0)
