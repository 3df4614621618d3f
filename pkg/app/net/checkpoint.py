"""
Checkpoint Storage

A checkpoint is a directory holding ``manifest.json`` (format version,
network configuration, training step, loss history and the name -> shape map)
plus one STNS file per parameter. It is written into a temporary sibling
directory and renamed into place, so readers never see a partial checkpoint.
"""
import logging
import os
import shutil
import tempfile
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.container import atomic_write_bytes, load_tensor, save_tensor
from app.errors import FormatError, ShapeError
from app.net.network import param_shapes
from app.net.networkConfiguration import NetworkConfig

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST = "manifest.json"


class CheckpointManifest(BaseModel):
    format_version: int = FORMAT_VERSION
    config: NetworkConfig
    step: int = Field(ge=0)
    loss_history: List[float] = []
    shapes: Dict[str, List[int]]


class Checkpoint(BaseModel):
    """Trained parameters with the configuration and training state they belong to."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: NetworkConfig
    params: Dict[str, np.ndarray]
    step: int = 0
    loss_history: List[float] = []
    path: Optional[str] = None


def _param_file(directory: str, name: str) -> str:
    return os.path.join(directory, f"{name}.stns")


def save_checkpoint(checkpoint: Checkpoint, path: str) -> Checkpoint:
    """Write ``checkpoint`` to the directory ``path``, replacing any previous one."""
    expected = param_shapes(checkpoint.config)
    if set(expected) != set(checkpoint.params):
        missing = sorted(set(expected) ^ set(checkpoint.params))
        raise ShapeError(f"parameters do not match the configuration: {missing[:5]}")
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    staging = tempfile.mkdtemp(dir=parent, prefix=".ckpt-")
    try:
        for name, value in checkpoint.params.items():
            if value.shape != expected[name]:
                raise ShapeError(f"parameter {name} has shape {value.shape}, expected {expected[name]}")
            save_tensor(_param_file(staging, name), value)
        manifest = CheckpointManifest(
            config=checkpoint.config,
            step=checkpoint.step,
            loss_history=checkpoint.loss_history,
            shapes={name: list(value.shape) for name, value in checkpoint.params.items()},
        )
        atomic_write_bytes(os.path.join(staging, MANIFEST), manifest.model_dump_json(indent=2).encode("utf-8"))
        if os.path.exists(path):
            retired = f"{staging}.old"
            os.replace(path, retired)
            os.replace(staging, path)
            shutil.rmtree(retired, ignore_errors=True)
        else:
            os.replace(staging, path)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    logger.info("Saved checkpoint at step %d to %s", checkpoint.step, path)
    return checkpoint.model_copy(update={"path": path})


def load_checkpoint(path: str) -> Checkpoint:
    """
    Read a checkpoint directory.

    Raises:
        FormatError: missing or invalid manifest, unknown format version, or a
            parameter file that disagrees with the manifest
    """
    manifest_path = os.path.join(path, MANIFEST)
    if not os.path.isfile(manifest_path):
        raise FormatError(f"no checkpoint manifest at {manifest_path}", 0)
    with open(manifest_path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        manifest = CheckpointManifest.model_validate_json(text)
    except ValueError as e:
        raise FormatError(f"invalid checkpoint manifest {manifest_path}: {e}", 0)
    if manifest.format_version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint format {manifest.format_version}", 0)
    expected = param_shapes(manifest.config)
    if {name: tuple(shape) for name, shape in manifest.shapes.items()} != expected:
        raise FormatError("manifest parameter shapes do not match its network configuration", 0)
    params = {}
    for name, shape in expected.items():
        value = load_tensor(_param_file(path, name))
        if value.shape != shape:
            raise FormatError(f"parameter {name} has shape {value.shape}, manifest says {shape}", 0)
        params[name] = value
    return Checkpoint(
        config=manifest.config, params=params, step=manifest.step, loss_history=manifest.loss_history, path=path
    )
