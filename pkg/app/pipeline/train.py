"""
Training Loop

Every step samples a T-frame window from the dataset, augments it, encodes it
with the fixed mask set, decodes it with the network on the autodiff tape,
and applies an Adam update on the MSE loss. An optional fine-tune stage
continues at a larger crop with a reduced learning rate.

Training is deterministic for a given seed when BLAS runs single-threaded.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import training_defaults
from app.core import autograd
from app.core.autograd import Variable, backprop
from app.errors import NonFiniteError, ShapeError, TrainingDivergedError
from app.net.checkpoint import Checkpoint, save_checkpoint
from app.net.network import init_params, reconstruct
from app.net.networkConfiguration import NetworkConfig
from app.pipeline.data import AugmentConfig, DatasetManifest, augment, load_clip
from app.pipeline.optim import Adam, learning_rate_at
from app.sensing.domain import MaskSet, NoiseModel, VideoCube
from app.sensing.forward import coarse_estimate, encode

logger = logging.getLogger(__name__)

Dataset = Union[DatasetManifest, Sequence[VideoCube]]


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(default=training_defaults.LEARNING_RATE, ge=0.0)
    decay_steps: int = Field(default=training_defaults.DECAY_STEPS, ge=0)
    decay_factor: float = Field(default=training_defaults.DECAY_FACTOR, gt=0.0, le=1.0)
    steps: int = Field(default=training_defaults.STEPS, ge=0)
    batch_size: int = Field(default=1, ge=1)
    crop: Optional[Tuple[int, int]] = None
    seed: int = Field(default=0, ge=0)
    random_crop: bool = True
    flip: bool = True
    scale: bool = False
    beta1: float = Field(default=training_defaults.BETA1, ge=0.0, lt=1.0)
    beta2: float = Field(default=training_defaults.BETA2, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=training_defaults.ADAM_EPS, gt=0.0)
    noise_sigma: float = Field(default=0.0, ge=0.0)
    finetune_steps: int = Field(default=0, ge=0)
    finetune_crop: Optional[Tuple[int, int]] = None
    finetune_lr_factor: float = Field(default=training_defaults.FINETUNE_LR_FACTOR, ge=0.0)
    log_every: int = Field(default=training_defaults.LOG_EVERY, ge=1)

    @model_validator(mode="after")
    def _finetune_needs_crop(self) -> "TrainConfig":
        if self.finetune_steps and self.finetune_crop is None:
            raise ValueError("finetune_steps requires finetune_crop")
        return self


def mse_loss(pred: VideoCube, truth: VideoCube) -> float:
    """(1 / (T*H*W)) * sum_t ||pred_t - truth_t||^2"""
    return float(autograd.mse(pred.frames.astype(np.float64), truth.frames.astype(np.float64)).data)


def _stage_config(net: NetworkConfig, crop: Tuple[int, int]) -> NetworkConfig:
    return NetworkConfig(**{**net.model_dump(), "h": crop[0], "w": crop[1]})


def _crop_masks(masks: MaskSet, crop: Tuple[int, int]) -> MaskSet:
    if crop[0] > masks.extents[1] or crop[1] > masks.extents[2]:
        raise ShapeError(f"crop {crop} exceeds mask extents {masks.extents[1:]}")
    return MaskSet(
        scheme=masks.scheme,
        masks=masks.masks[:, : crop[0], : crop[1]],
        seed=masks.seed,
        density=masks.density,
        ideal=masks.ideal,
    )


def _sample_window(dataset: Dataset, frames: int, rng: np.random.Generator) -> VideoCube:
    if isinstance(dataset, DatasetManifest):
        entry = dataset.clips[int(rng.integers(len(dataset.clips)))]
        start = int(rng.integers(entry.frame_count - frames + 1))
        return load_clip(entry, start, frames)
    clip = dataset[int(rng.integers(len(dataset)))]
    start = int(rng.integers(clip.extents[0] - frames + 1))
    return VideoCube(frames=clip.frames[start : start + frames])


def _check_dataset(dataset: Dataset, frames: int) -> None:
    if isinstance(dataset, DatasetManifest):
        if not dataset.clips:
            raise ShapeError("dataset has no clips")
        dataset.require_frames(frames)
        return
    if not dataset:
        raise ShapeError("dataset has no clips")
    for clip in dataset:
        if clip.extents[0] < frames:
            raise ShapeError(f"clip with {clip.extents[0]} frames is shorter than T={frames}")


def train(
    dataset: Dataset,
    masks: MaskSet,
    net: NetworkConfig,
    cfg: TrainConfig,
    params: Optional[Dict[str, np.ndarray]] = None,
    output: Optional[str] = None,
) -> Checkpoint:
    """
    Fit the network to ``dataset`` under the fixed mask set.

    Args:
        dataset: PNG clip manifest or in-memory clips
        masks: mask set; training crops use its top-left corner
        net: network configuration (t must equal the mask frame count)
        cfg: training configuration
        params: starting parameters; freshly initialized from ``cfg.seed`` when omitted
        output: checkpoint directory written at the end (and on divergence)

    Raises:
        TrainingDivergedError: the loss became non-finite; carries the last
            good checkpoint
    """
    if net.t != masks.frames:
        raise ShapeError(f"network expects T={net.t} but the mask set has {masks.frames} frames")
    _check_dataset(dataset, net.t)
    stages: List[Tuple[Tuple[int, int], int, float]] = [
        (cfg.crop or (masks.extents[1], masks.extents[2]), cfg.steps, cfg.learning_rate)
    ]
    if cfg.finetune_steps:
        stages.append((cfg.finetune_crop, cfg.finetune_steps, cfg.learning_rate * cfg.finetune_lr_factor))
    stage_configs = [_stage_config(net, crop) for crop, _, _ in stages]

    params = params if params is not None else init_params(net, seed=cfg.seed)
    dtype = next(iter(params.values())).dtype
    optimizer = Adam(params, cfg.beta1, cfg.beta2, cfg.adam_eps)
    noise = NoiseModel(kind="gaussian" if cfg.noise_sigma > 0 else "none", sigma=cfg.noise_sigma)
    history: List[float] = []
    step = 0

    def snapshot(config: NetworkConfig) -> Checkpoint:
        checkpoint = Checkpoint(config=config, params=params, step=step, loss_history=list(history))
        return save_checkpoint(checkpoint, output) if output else checkpoint

    for (crop, steps, lr0), config in zip(stages, stage_configs):
        stage_masks = _crop_masks(masks, crop)
        augment_cfg = AugmentConfig(crop=crop, random_crop=cfg.random_crop, flip=cfg.flip, scale=cfg.scale)
        logger.info("Training %d steps at crop %s, lr %g", steps, crop, lr0)
        for _ in range(steps):
            rng = np.random.default_rng([cfg.seed, step])
            variables = {name: Variable(value, requires_grad=True) for name, value in params.items()}
            loss_value = 0.0
            try:
                for _ in range(cfg.batch_size):
                    truth = augment(_sample_window(dataset, net.t, rng), augment_cfg, seed=int(rng.integers(2**32)))
                    noise = noise.model_copy(update={"seed": int(rng.integers(2**32))})
                    x_e = coarse_estimate(encode(truth, stage_masks, noise), stage_masks)
                    out = reconstruct(x_e.frames.astype(dtype), variables, config)
                    loss = autograd.mse(out, truth.frames.astype(dtype))
                    backprop(loss)
                    loss_value += float(loss.data) / cfg.batch_size
            except NonFiniteError as e:
                loss_value = float("nan")
                logger.warning("Non-finite value during step %d: %s", step, e)
            if not np.isfinite(loss_value):
                logger.warning("Loss diverged at step %d; keeping parameters from step %d", step, step)
                raise TrainingDivergedError(f"loss became non-finite at step {step}", snapshot(config))
            history.append(loss_value)
            grads = {
                name: (v.grad if v.grad is not None else np.zeros_like(v.data)) / cfg.batch_size
                for name, v in variables.items()
            }
            lr = learning_rate_at(lr0, step, cfg.decay_steps, cfg.decay_factor)
            params = optimizer.step(params, grads, lr)
            step += 1
            if step % cfg.log_every == 0 or step == 1:
                logger.info("step %d loss %.6f lr %.2e", step, loss_value, lr)

    return snapshot(stage_configs[-1])
