"""
Compression-ratio sweep: GAP-TV quality as more frames share one measurement.
"""
import logging
from typing import List, Optional, Sequence

from pydantic import BaseModel

from app.errors import ConfigError
from app.pipeline.scenes import SceneKind, synth_scene
from app.recon.gaptv import GapTvConfig, gap_tv_solve
from app.recon.metrics import psnr, ssim
from app.sensing.forward import coarse_estimate, encode
from app.sensing.masks import gen_uss

logger = logging.getLogger(__name__)


class CrSweepRow(BaseModel):
    frames: int
    psnr: float
    ssim: float
    seconds: float
    coarse_psnr: float


def cr_sweep(
    frame_counts: Sequence[int],
    height: int,
    width: int,
    kind: SceneKind = SceneKind.MOVING_SQUARE,
    seed: int = 0,
    gap_tv: Optional[GapTvConfig] = None,
) -> List[CrSweepRow]:
    """For each T: USS masks, encode a synthetic scene, decode with GAP-TV and score it."""
    if not frame_counts or min(frame_counts) < 1:
        raise ConfigError(f"frame counts must be positive, got {list(frame_counts)}")
    rows = []
    for t in frame_counts:
        scene = synth_scene(kind, t, height, width, seed=seed)
        masks = gen_uss(t, height, width, seed=seed)
        y = encode(scene, masks)
        result = gap_tv_solve(y, masks, gap_tv)
        rows.append(
            CrSweepRow(
                frames=t,
                psnr=psnr(result.frames, scene),
                ssim=ssim(result.frames, scene),
                seconds=result.seconds,
                coarse_psnr=psnr(coarse_estimate(y, masks).clipped(), scene),
            )
        )
        logger.info("Cr=%d: PSNR %.2f dB in %.2fs", t, rows[-1].psnr, rows[-1].seconds)
    return rows
