"""
Reconstruction Network

Coarse estimate -> feature extraction (three 3D convolutions, the last one
halving H and W) -> BSTFormer blocks -> reconstruction head (transposed
convolution back to full resolution, then 1x1x1 and 3x3x3 convolutions down
to one channel).

Parameters are a flat dict from dotted names to arrays; every function here
is a pure function of its inputs and parameters, so the same code runs on
plain arrays for inference and on tape Variables for training.
"""
import logging
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import stats

from app.config import network_defaults
from app.core import autograd
from app.core.autograd import ArrayOrVariable, Variable
from app.core.convSpec import ConvSpec
from app.errors import ShapeError
from app.net.attention import Params
from app.net.blocks import block_forward
from app.net.networkConfiguration import NetworkConfig
from app.sensing.domain import MaskSet, Measurement, VideoCube
from app.sensing.forward import coarse_estimate

logger = logging.getLogger(__name__)


class FeatureMap(BaseModel):
    """A [T, H', W', C] feature tensor tagged with the stage that produced it."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    tensor: np.ndarray
    stage: str

    def check(self, config: NetworkConfig) -> None:
        t, h, w, c = self.tensor.shape
        if c != config.c or h * 2 != config.h or w * 2 != config.w or t != config.t:
            raise ShapeError(f"{self.stage} features {self.tensor.shape} do not match {config}")


def extract_specs(c: int) -> List[ConvSpec]:
    return [
        ConvSpec(kernel=(3, 7, 7), in_channels=1, out_channels=c, padding=(1, 3, 3)),
        ConvSpec.same((3, 3, 3), c, c),
        ConvSpec(kernel=(3, 3, 3), in_channels=c, out_channels=c, stride=(1, 2, 2), padding=(1, 1, 1)),
    ]


def head_specs(c: int) -> Dict[str, ConvSpec]:
    return {
        "up": ConvSpec(
            kernel=(1, 3, 3), in_channels=c, out_channels=c, stride=(1, 2, 2), padding=(0, 1, 1), output_padding=(0, 1, 1)
        ),
        "mix": ConvSpec.same((1, 1, 1), c, c),
        "out": ConvSpec.same((3, 3, 3), c, 1),
    }


def param_shapes(config: NetworkConfig) -> Dict[str, Tuple[int, ...]]:
    """Name -> shape for every parameter of the network, in a fixed order."""
    c, d = config.c, config.branch_channels
    shapes: Dict[str, Tuple[int, ...]] = {}
    for i, spec in enumerate(extract_specs(c)):
        shapes[f"extract.{i}.w"] = spec.weight_shape
        shapes[f"extract.{i}.b"] = (spec.out_channels,)
    for k in range(config.blocks):
        for kind in config.enabled_branches:
            prefix = f"block{k}.{kind}"
            shapes[f"{prefix}.norm.gamma"] = (d,)
            shapes[f"{prefix}.norm.beta"] = (d,)
            for proj in ("q", "k", "v", "o"):
                shapes[f"{prefix}.{proj}"] = (d, d)
            shapes[f"{prefix}.ffn.w2"] = ConvSpec.same((3, 3, 3), d, d).weight_shape
            shapes[f"{prefix}.ffn.b2"] = (d,)
            shapes[f"{prefix}.ffn.w1"] = ConvSpec.same((1, 1, 1), d, d).weight_shape
            shapes[f"{prefix}.ffn.b1"] = (d,)
        shapes[f"block{k}.fuse.w"] = ConvSpec.same((1, 1, 1), c, c).weight_shape
        shapes[f"block{k}.fuse.b"] = (c,)
    for name, spec in head_specs(c).items():
        shapes[f"head.{name}.w"] = spec.weight_shape
        # transposed convolutions produce spec.in_channels
        shapes[f"head.{name}.b"] = (spec.in_channels if name == "up" else spec.out_channels,)
    return shapes


def count_parameters(config: NetworkConfig) -> int:
    return int(sum(np.prod(shape) for shape in param_shapes(config).values()))


def init_params(config: NetworkConfig, seed: int = 0, dtype=np.float32) -> Dict[str, np.ndarray]:
    """
    Truncated-normal (std 0.02, cut at 2 std) weights and projections, zero
    biases, unit normalization scale, and zero block fusion weights so that
    every block starts as the identity.
    """
    rng = np.random.default_rng(seed)
    params: Dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".gamma"):
            value = np.ones(shape)
        elif name.endswith((".b", ".b1", ".b2", ".beta")) or ".fuse.w" in name:
            value = np.zeros(shape)
        else:
            value = stats.truncnorm.rvs(-2.0, 2.0, scale=network_defaults.INIT_STD, size=shape, random_state=rng)
        params[name] = np.asarray(value, dtype=dtype)
    logger.debug("Initialized %d parameter tensors (%d values)", len(params), count_parameters(config))
    return params


def feature_extract(x_e: ArrayOrVariable, params: Params, config: NetworkConfig) -> Variable:
    """[T, H, W] coarse estimate -> [T, H/2, W/2, C] features."""
    if len(x_e.shape) != 3:
        raise ShapeError(f"expected a [T, H, W] coarse estimate, got shape {x_e.shape}")
    t, h, w = x_e.shape
    if h % 2 or w % 2:
        raise ShapeError(f"feature extraction needs even frame extents, got {h}x{w}")
    x = autograd.rearrange(x_e, "t h w -> t h w 1")
    for i, spec in enumerate(extract_specs(config.c)):
        x = autograd.conv3d(x, params[f"extract.{i}.w"], params[f"extract.{i}.b"], spec)
        x = autograd.leaky_relu(x, config.leaky_slope)
    return x


def reconstruct_head(f: ArrayOrVariable, params: Params, config: NetworkConfig) -> Variable:
    """[T, H', W', C] features -> [T, 2H', 2W'] frames."""
    specs = head_specs(config.c)
    x = autograd.transposed_conv3d(f, params["head.up.w"], params["head.up.b"], specs["up"])
    x = autograd.leaky_relu(x, config.leaky_slope)
    x = autograd.conv3d(x, params["head.mix.w"], params["head.mix.b"], specs["mix"])
    x = autograd.leaky_relu(x, config.leaky_slope)
    x = autograd.conv3d(x, params["head.out.w"], params["head.out.b"], specs["out"])
    return autograd.rearrange(x, "t h w 1 -> t h w")


def reconstruct(x_e: ArrayOrVariable, params: Params, config: NetworkConfig) -> Variable:
    """Differentiable path from the coarse estimate to the reconstructed frames."""
    config.check_extents(*x_e.shape)
    f = feature_extract(x_e, params, config)
    for k in range(config.blocks):
        f = block_forward(f, params, f"block{k}", config)
    return reconstruct_head(f, params, config)


def network_forward(y: Measurement, m: MaskSet, params: Params, config: NetworkConfig) -> VideoCube:
    """Decode one measurement: coarse estimate, then the network. Output is not clipped."""
    if m.frames != config.t:
        raise ShapeError(f"mask set has {m.frames} frames, network expects {config.t}")
    x_e = coarse_estimate(y, m)
    dtype = next(iter(params.values())).dtype
    out = reconstruct(x_e.frames.astype(dtype), params, config)
    return VideoCube(frames=out.data)


def trace_features(x_e: VideoCube, params: Params, config: NetworkConfig) -> List[FeatureMap]:
    """Feature maps after extraction, after every block, and entering the head."""
    f = feature_extract(x_e.frames, params, config)
    trace = [FeatureMap(tensor=f.data, stage="post-extraction")]
    for k in range(config.blocks):
        f = block_forward(f, params, f"block{k}", config)
        trace.append(FeatureMap(tensor=f.data, stage=f"post-block-{k}"))
    trace.append(FeatureMap(tensor=f.data, stage="pre-head"))
    for feature_map in trace:
        feature_map.check(config)
    return trace
