"""
Synthetic Scenes

Deterministic analytic motion used as a desk-scale stand-in for benchmark
clips. The seed only picks the motion parameters; every frame is then a
closed-form function of the frame index.
"""
import logging
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel

from app.errors import ConfigError, ShapeError
from app.sensing.domain import VideoCube

logger = logging.getLogger(__name__)

BACKGROUND = 0.2
FOREGROUND = 0.9


class SceneKind(str, Enum):
    MOVING_SQUARE = "moving-square"
    DRIFTING_GRADIENT = "drifting-gradient"
    BOUNCING_DOT = "bouncing-dot"


class SceneMotion(BaseModel):
    kind: SceneKind
    y0: float
    x0: float
    vy: float
    vx: float
    size: int
    phase: float = 0.0


def scene_motion(kind: SceneKind, height: int, width: int, seed: int = 0, speed: Optional[float] = None) -> SceneMotion:
    """Draw the motion parameters of a scene; ``speed`` overrides the seeded speed (0 freezes the scene)."""
    kind = SceneKind(kind)
    rng = np.random.default_rng(seed)
    size = max(2, min(height, width) // 4)
    direction = rng.choice([-1.0, 1.0], size=2)
    drawn = float(rng.integers(1, 3))
    speed = drawn if speed is None else float(speed)
    return SceneMotion(
        kind=kind,
        y0=float(rng.integers(0, height)),
        x0=float(rng.integers(0, width)),
        vy=direction[0] * speed,
        vx=direction[1] * speed,
        size=size,
        phase=float(rng.uniform(0.0, 2.0 * np.pi)),
    )


def _reflect(z: float, lo: float, hi: float) -> float:
    span = hi - lo
    if span <= 0:
        return lo
    m = (z - lo) % (2.0 * span)
    return lo + (m if m <= span else 2.0 * span - m)


def render_frame(motion: SceneMotion, t: int, height: int, width: int) -> np.ndarray:
    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]
    if motion.kind == SceneKind.MOVING_SQUARE:
        # wraps around the frame edges
        inside_y = (rows - (motion.y0 + motion.vy * t)) % height < motion.size
        inside_x = (cols - (motion.x0 + motion.vx * t)) % width < motion.size
        return np.where(inside_y & inside_x, FOREGROUND, BACKGROUND)
    if motion.kind == SceneKind.DRIFTING_GRADIENT:
        angle = 2.0 * np.pi * (rows / height + cols / width) + motion.phase - 0.4 * np.hypot(motion.vy, motion.vx) * t
        return 0.5 + 0.5 * np.sin(angle)
    radius = motion.size / 2.0
    cy = _reflect(motion.y0 + motion.vy * t, radius, height - 1 - radius)
    cx = _reflect(motion.x0 + motion.vx * t, radius, width - 1 - radius)
    dot = np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2.0 * (radius / 2.0) ** 2))
    return BACKGROUND / 2.0 + (FOREGROUND - BACKGROUND / 2.0) * dot


def synth_scene(
    kind: SceneKind,
    frames: int,
    height: int,
    width: int,
    seed: int = 0,
    speed: Optional[float] = None,
    brightness: float = 1.0,
) -> VideoCube:
    """
    Render a synthetic clip with values in [0, 1].

    ``brightness`` scales the whole scene before clipping.
    """
    if frames < 1 or height < 1 or width < 1:
        raise ShapeError(f"scene extents must be positive, got T={frames}, H={height}, W={width}")
    if brightness < 0:
        raise ConfigError(f"brightness must be >= 0, got {brightness}")
    motion = scene_motion(kind, height, width, seed, speed)
    cube = np.stack([render_frame(motion, t, height, width) for t in range(frames)])
    logger.debug("Synthesized %s scene %dx%dx%d (seed %d)", motion.kind.value, frames, height, width, seed)
    return VideoCube(frames=np.clip(brightness * cube, 0.0, 1.0))
