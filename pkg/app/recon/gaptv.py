"""
GAP-TV Baseline Decoder

Generalized alternating projection with total-variation regularization. Each
iteration projects the current estimate onto {x : Phi x = y}, which is cheap
because Phi Phi^T is diagonal (sum_t M_t^2 per pixel), then denoises the
projection with a few projected-gradient steps on the dual of anisotropic 2D
TV, frame by frame.

With acceleration the projection targets an accumulated measurement
y_k = y_{k-1} + (y - Phi v_k), which converges faster but is not exactly
measurement-consistent mid-run. The returned cube is always the plain
projection of the last denoised iterate, clipped to [0, 1].
"""
import logging
import time
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.config import gap_tv_defaults, sensing_defaults
from app.errors import ShapeError
from app.sensing.domain import MaskSet, Measurement, VideoCube
from app.sensing.forward import dequantize

logger = logging.getLogger(__name__)


class GapTvConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    iterations: int = Field(default=gap_tv_defaults.ITERATIONS, ge=1)
    tv_weight: float = Field(default=gap_tv_defaults.TV_WEIGHT, ge=0.0)
    tv_inner_steps: int = Field(default=gap_tv_defaults.TV_INNER_STEPS, ge=1)
    accelerate: bool = gap_tv_defaults.ACCELERATE


class GapTvResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    frames: VideoCube
    residuals: List[float]
    projection_residuals: List[float]
    seconds: float


def _gradient(u: np.ndarray):
    # forward differences along H and W with a zero last row / column
    gy = np.zeros_like(u)
    gx = np.zeros_like(u)
    gy[:, :-1, :] = u[:, 1:, :] - u[:, :-1, :]
    gx[:, :, :-1] = u[:, :, 1:] - u[:, :, :-1]
    return gy, gx


def _gradient_adjoint(py: np.ndarray, px: np.ndarray) -> np.ndarray:
    u = np.zeros_like(py)
    u[:, 1:, :] += py[:, :-1, :]
    u[:, :-1, :] -= py[:, :-1, :]
    u[:, :, 1:] += px[:, :, :-1]
    u[:, :, :-1] -= px[:, :, :-1]
    return u


def tv_denoise(x: np.ndarray, weight: float, steps: int) -> np.ndarray:
    """
    Approximate argmin_u 0.5*||u - x||^2 + weight*(|D_y u|_1 + |D_x u|_1) per frame.

    Projected gradient on the dual variable p with |p| <= 1, step 1/(8*weight).
    """
    if weight == 0.0:
        return x.copy()
    py = np.zeros_like(x)
    px = np.zeros_like(x)
    step = 1.0 / (8.0 * weight)
    for _ in range(steps):
        u = x - weight * _gradient_adjoint(py, px)
        gy, gx = _gradient(u)
        py = np.clip(py + step * gy, -1.0, 1.0)
        px = np.clip(px + step * gx, -1.0, 1.0)
    return x - weight * _gradient_adjoint(py, px)


def _forward(x: np.ndarray, masks: np.ndarray) -> np.ndarray:
    y = np.zeros(x.shape[1:], dtype=x.dtype)
    for t in range(x.shape[0]):
        y += masks[t] * x[t]
    return y


def gap_tv_solve(
    y: Measurement,
    m: MaskSet,
    cfg: Optional[GapTvConfig] = None,
    on_projection=None,
) -> GapTvResult:
    """
    Run GAP-TV and keep the residual traces.

    ``residuals`` holds the RMS data-consistency residual ||y - Phi v||/sqrt(n)
    after each denoising step; ``projection_residuals`` the same quantity for
    each projection. ``on_projection(k, x)`` is called with every projection.

    Pixels no mask covers are left out of the projection.
    """
    cfg = cfg or GapTvConfig()
    started = time.perf_counter()
    y = dequantize(y)
    if y.extents != m.extents[1:]:
        raise ShapeError(f"measurement {y.extents} does not match masks {m.extents[1:]}")
    target = y.values.astype(np.float64)
    masks = m.masks.astype(np.float64)
    gram = (masks * masks).sum(axis=0)
    covered = gram > sensing_defaults.COVERAGE_EPS
    inverse = np.where(covered, 1.0 / np.where(covered, gram, 1.0), 0.0)
    if not np.all(covered):
        logger.warning("GAP-TV: %d pixels have no mask coverage", int((~covered).sum()))

    def project(v: np.ndarray, goal: np.ndarray) -> np.ndarray:
        return v + masks * ((goal - _forward(v, masks)) * inverse)[None]

    def rms(x: np.ndarray) -> float:
        return float(np.sqrt(np.mean(((target - _forward(x, masks)) * covered) ** 2)))

    logger.info(
        "GAP-TV on %s: %d iterations, tv_weight=%g, accelerate=%s", m.extents, cfg.iterations, cfg.tv_weight, cfg.accelerate
    )
    v = project(np.zeros_like(masks), target)
    accumulated = target.copy()
    residuals, projection_residuals = [], []
    for k in range(cfg.iterations):
        if cfg.accelerate:
            accumulated = accumulated + (target - _forward(v, masks))
            x = project(v, accumulated)
        else:
            x = project(v, target)
        projection_residuals.append(rms(x))
        if on_projection is not None:
            on_projection(k, x)
        v = tv_denoise(x, cfg.tv_weight, cfg.tv_inner_steps)
        residuals.append(rms(v))
        logger.debug("GAP-TV iteration %d: residual %.3e", k, residuals[-1])
        if not np.isfinite(residuals[-1]):
            logger.warning("GAP-TV residual became non-finite at iteration %d", k)
            break

    out = np.clip(project(v, target), 0.0, 1.0)
    seconds = time.perf_counter() - started
    logger.info("GAP-TV finished in %.2fs, final residual %.3e", seconds, residuals[-1])
    return GapTvResult(
        frames=VideoCube(frames=out), residuals=residuals, projection_residuals=projection_residuals, seconds=seconds
    )


def gap_tv_decode(y: Measurement, m: MaskSet, cfg: Optional[GapTvConfig] = None) -> VideoCube:
    return gap_tv_solve(y, m, cfg).frames
