"""
Evaluation

Encodes every clip with the mask set, decodes it with a trained checkpoint or
with GAP-TV, and tabulates PSNR / SSIM / decode time per clip plus an average
row. The coarse-estimate PSNR is reported next to each decoded PSNR.
"""
import logging
import time
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel

from app.errors import ShapeError
from app.net.checkpoint import Checkpoint, load_checkpoint
from app.recon.decode import decode
from app.recon.gaptv import GapTvConfig, gap_tv_decode
from app.recon.metrics import psnr, ssim
from app.sensing.domain import MaskSet, NoiseModel, VideoCube
from app.sensing.forward import coarse_estimate, encode

logger = logging.getLogger(__name__)

Decoder = Union[Checkpoint, str]


class EvalRow(BaseModel):
    name: str
    psnr: float
    ssim: float
    runtime_seconds: float
    coarse_psnr: float

    @property
    def gain_db(self) -> float:
        return self.psnr - self.coarse_psnr


class EvalTable(BaseModel):
    method: str
    rows: List[EvalRow]

    @property
    def average(self) -> EvalRow:
        return self.rows[-1]

    def render(self) -> str:
        header = f"{'clip':<20}{'PSNR':>9}{'SSIM':>8}{'time(s)':>10}{'X_e PSNR':>10}{'gain':>8}"
        lines = [f"method: {self.method}", header, "-" * len(header)]
        for row in self.rows:
            lines.append(
                f"{row.name:<20}{row.psnr:>9.2f}{row.ssim:>8.4f}{row.runtime_seconds:>10.3f}"
                f"{row.coarse_psnr:>10.2f}{row.gain_db:>8.2f}"
            )
        return "\n".join(lines)

    def records(self) -> List[dict]:
        return [{**row.model_dump(), "gain_db": row.gain_db} for row in self.rows]


def score(name: str, truth: VideoCube, decoded: VideoCube, runtime_seconds: float, coarse: VideoCube) -> EvalRow:
    return EvalRow(
        name=name,
        psnr=psnr(decoded, truth),
        ssim=ssim(decoded, truth),
        runtime_seconds=runtime_seconds,
        coarse_psnr=psnr(coarse, truth),
    )


def average_row(rows: Sequence[EvalRow]) -> EvalRow:
    return EvalRow(
        name="average",
        psnr=float(np.mean([r.psnr for r in rows])),
        ssim=float(np.mean([r.ssim for r in rows])),
        runtime_seconds=float(np.mean([r.runtime_seconds for r in rows])),
        coarse_psnr=float(np.mean([r.coarse_psnr for r in rows])),
    )


def evaluate(
    clips: Sequence[Tuple[str, VideoCube]],
    masks: MaskSet,
    decoder: Decoder = "gap-tv",
    gap_tv: Optional[GapTvConfig] = None,
    noise: Optional[NoiseModel] = None,
) -> EvalTable:
    """
    Args:
        clips: (name, ground truth) pairs with the mask extents
        masks: mask set used to encode every clip
        decoder: a Checkpoint, a checkpoint directory, or "gap-tv"
        gap_tv: GAP-TV settings when decoding with GAP-TV
        noise: read noise added while encoding

    Returns:
        one row per clip followed by the average row
    """
    if not clips:
        raise ShapeError("nothing to evaluate: no clips")
    method = "gap-tv" if isinstance(decoder, str) and decoder == "gap-tv" else "bstformer"
    if method == "bstformer" and isinstance(decoder, str):
        decoder = load_checkpoint(decoder)
    rows = []
    for name, truth in clips:
        y = encode(truth, masks, noise)
        started = time.perf_counter()
        if method == "gap-tv":
            decoded = gap_tv_decode(y, masks, gap_tv)
        else:
            decoded = decode(y, masks, decoder)
        runtime = time.perf_counter() - started
        rows.append(score(name, truth, decoded, runtime, coarse_estimate(y, masks).clipped()))
        logger.info("%s %s: PSNR %.2f dB, SSIM %.4f, %.3fs", method, name, rows[-1].psnr, rows[-1].ssim, runtime)
    rows.append(average_row(rows))
    return EvalTable(method=method, rows=rows)
