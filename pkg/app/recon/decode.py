"""
Decode Entry Point

Learned decoding from a checkpoint, with every compatibility check done
before any compute.
"""
import logging
import time
from typing import Union

import numpy as np

from app.errors import ShapeError
from app.net.checkpoint import Checkpoint, load_checkpoint
from app.net.network import network_forward
from app.sensing.domain import MaskSet, Measurement, VideoCube

logger = logging.getLogger(__name__)


def _resolve(model_checkpoint: Union[Checkpoint, str]) -> Checkpoint:
    if isinstance(model_checkpoint, Checkpoint):
        return model_checkpoint
    return load_checkpoint(model_checkpoint)


def decode(y: Measurement, m: MaskSet, model_checkpoint: Union[Checkpoint, str]) -> VideoCube:
    """
    Reconstruct the video cube behind ``y`` with a trained network, clipped to [0, 1].

    Raises:
        ShapeError: checkpoint extents differ from the masks, or the
            measurement differs from the mask plane
    """
    checkpoint = _resolve(model_checkpoint)
    config = checkpoint.config
    if m.extents != (config.t, config.h, config.w):
        raise ShapeError(f"checkpoint expects masks of extents {(config.t, config.h, config.w)}, got {m.extents}")
    if y.extents != m.extents[1:]:
        raise ShapeError(f"measurement {y.extents} does not match masks {m.extents[1:]}")
    started = time.perf_counter()
    out = network_forward(y, m, checkpoint.params, config)
    logger.info("Decoded %s with checkpoint step %d in %.2fs", m.extents, checkpoint.step, time.perf_counter() - started)
    return VideoCube(frames=np.clip(out.frames, 0.0, 1.0))
