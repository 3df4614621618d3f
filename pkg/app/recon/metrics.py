"""
Image Quality Metrics

PSNR and SSIM over video cubes, computed per frame and averaged over frames.
"""
from typing import Union

import numpy as np
from pydantic import BaseModel, Field
from scipy import ndimage

from app.errors import ShapeError
from app.sensing.domain import VideoCube

PSNR_CAP = 99.0
SSIM_SIGMA = 1.5

Cube = Union[VideoCube, np.ndarray]


class MetricsResult(BaseModel):
    psnr: float = Field(ge=0.0, le=PSNR_CAP)
    ssim: float = Field(ge=-1.0, le=1.0)


def _frames(x: Cube) -> np.ndarray:
    return np.asarray(x.frames if isinstance(x, VideoCube) else x, dtype=np.float64)


def _pair(a: Cube, b: Cube):
    a, b = _frames(a), _frames(b)
    if a.shape != b.shape:
        raise ShapeError(f"cannot compare cubes of shapes {a.shape} and {b.shape}")
    return a, b


def psnr(a: Cube, b: Cube, peak: float = 1.0) -> float:
    """Mean over frames of 10*log10(peak^2 / MSE_t), each frame capped at 99 dB."""
    a, b = _pair(a, b)
    scores = []
    for fa, fb in zip(a, b):
        mse = float(np.mean((fa - fb) ** 2))
        scores.append(PSNR_CAP if mse == 0.0 else min(PSNR_CAP, 10.0 * np.log10(peak**2 / mse)))
    return float(np.mean(scores))


def _ssim_frame(a: np.ndarray, b: np.ndarray, window: int, c1: float, c2: float) -> float:
    radius = (window - 1) // 2
    truncate = radius / SSIM_SIGMA

    def blur(x: np.ndarray) -> np.ndarray:
        # 'valid' region only: drop the border where the window leaves the frame
        out = ndimage.gaussian_filter(x, SSIM_SIGMA, truncate=truncate, mode="constant")
        return out[radius : x.shape[0] - radius, radius : x.shape[1] - radius]

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a: Cube, b: Cube, window: int = 11, k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """
    Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over frames.

    Raises:
        ShapeError: frames smaller than the window
    """
    a, b = _pair(a, b)
    if window < 1 or window % 2 == 0:
        raise ShapeError(f"window must be a positive odd size, got {window}")
    if min(a.shape[1:]) < window:
        raise ShapeError(f"frames {a.shape[1:]} are smaller than the {window}x{window} window")
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    return float(np.mean([_ssim_frame(fa, fb, window, c1, c2) for fa, fb in zip(a, b)]))


def compare(a: Cube, b: Cube, peak: float = 1.0) -> MetricsResult:
    return MetricsResult(psnr=max(0.0, psnr(a, b, peak)), ssim=ssim(a, b))
