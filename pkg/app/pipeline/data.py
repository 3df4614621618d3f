"""
Datasets and Augmentation

A dataset is a directory of clips, each clip a directory of ordered grayscale
PNG frames. RGB frames are converted with the Rec. 601 luma weights. Training
windows are augmented with a seeded random crop, horizontal flip and spatial
rescale.
"""
import glob
import io
import logging
import os
from typing import List, Literal, Optional, Sequence

import numpy as np
from PIL import Image
from pydantic import BaseModel, Field, model_validator
from scipy import ndimage

from app.config import training_defaults
from app.core.container import atomic_write_bytes
from app.errors import FormatError, ShapeError
from app.sensing.domain import VideoCube

logger = logging.getLogger(__name__)

LUMA_601 = (0.299, 0.587, 0.114)


class ClipEntry(BaseModel):
    directory: str
    frame_count: int = Field(ge=1)
    height: int = Field(ge=1)
    width: int = Field(ge=1)

    @property
    def frame_paths(self) -> List[str]:
        return sorted(glob.glob(os.path.join(self.directory, "*.png")))


class DatasetManifest(BaseModel):
    clips: List[ClipEntry]
    split: Literal["train", "test"] = "train"

    def require_frames(self, frames: int) -> None:
        short = [c.directory for c in self.clips if c.frame_count < frames]
        if short:
            raise ShapeError(f"{len(short)} clips have fewer than {frames} frames, e.g. {short[0]}")


def _read_png(path: str) -> np.ndarray:
    try:
        with Image.open(path) as image:
            mode = image.mode
            pixels = np.asarray(image)
    except OSError as e:
        raise FormatError(f"cannot read image {path}: {e}", 0)
    if mode in ("I;16", "I;16B", "I"):
        return pixels.astype(np.float64) / 65535.0
    pixels = pixels.astype(np.float64) / 255.0
    if pixels.ndim == 3:
        pixels = pixels[..., :3] @ np.asarray(LUMA_601)
    return pixels


def build_manifest(root: str, split: Literal["train", "test"] = "train", min_frames: int = 1) -> DatasetManifest:
    """
    Scan ``root`` for clip directories of PNG frames.

    Raises:
        ShapeError: a clip whose frames differ in extent, or fewer than
            ``min_frames`` frames
    """
    clips = []
    for directory in sorted(d for d in glob.glob(os.path.join(root, "*")) if os.path.isdir(d)):
        paths = sorted(glob.glob(os.path.join(directory, "*.png")))
        if not paths:
            continue
        sizes = set()
        for path in paths:
            with Image.open(path) as image:
                sizes.add(image.size)
        if len(sizes) != 1:
            raise ShapeError(f"clip {directory} mixes frame extents {sorted(sizes)}")
        width, height = sizes.pop()
        clips.append(ClipEntry(directory=directory, frame_count=len(paths), height=height, width=width))
    manifest = DatasetManifest(clips=clips, split=split)
    manifest.require_frames(min_frames)
    logger.info("Found %d %s clips under %s", len(clips), split, root)
    return manifest


def load_clip(entry: ClipEntry, start: int = 0, frames: Optional[int] = None) -> VideoCube:
    paths = entry.frame_paths[start : None if frames is None else start + frames]
    if frames is not None and len(paths) < frames:
        raise ShapeError(f"clip {entry.directory} has no {frames}-frame window at {start}")
    return VideoCube(frames=np.stack([_read_png(p) for p in paths]))


def save_frames(cube: VideoCube, directory: str) -> List[str]:
    """Write each frame as an 8-bit grayscale PNG named by its index."""
    paths = []
    for t, frame in enumerate(cube.clipped().frames):
        buffer = io.BytesIO()
        Image.fromarray(np.rint(frame * 255).astype(np.uint8)).save(buffer, format="PNG")
        path = os.path.join(directory, f"{t:04d}.png")
        atomic_write_bytes(path, buffer.getvalue())
        paths.append(path)
    return paths


class AugmentConfig(BaseModel):
    crop: Sequence[int]
    random_crop: bool = True
    flip: bool = True
    scale: bool = True
    scales: List[float] = training_defaults.SCALES

    @model_validator(mode="after")
    def _check_crop(self) -> "AugmentConfig":
        if len(self.crop) != 2 or min(self.crop) < 1:
            raise ValueError(f"crop must be a positive (height, width), got {self.crop}")
        return self


def hflip(clip: VideoCube) -> VideoCube:
    return VideoCube(frames=clip.frames[:, :, ::-1].copy())


def augment(clip: VideoCube, cfg: AugmentConfig, seed: int = 0) -> VideoCube:
    """
    Seeded rescale, crop and horizontal flip; the output always has crop extents.

    With every toggle off this is a center crop.

    Raises:
        ShapeError: clip smaller than the crop
    """
    ch, cw = cfg.crop
    _, h, w = clip.extents
    if h < ch or w < cw:
        raise ShapeError(f"clip {h}x{w} is smaller than crop {ch}x{cw}")
    rng = np.random.default_rng(seed)
    frames = clip.frames
    if cfg.scale:
        candidates = [s for s in cfg.scales if round(h * s) >= ch and round(w * s) >= cw]
        factor = float(rng.choice(candidates)) if candidates else 1.0
        if factor != 1.0:
            frames = ndimage.zoom(frames, (1.0, round(h * factor) / h, round(w * factor) / w), order=1)
            frames = np.clip(frames, 0.0, 1.0)
    _, h, w = frames.shape
    if cfg.random_crop:
        top, left = int(rng.integers(0, h - ch + 1)), int(rng.integers(0, w - cw + 1))
    else:
        top, left = (h - ch) // 2, (w - cw) // 2
    cube = VideoCube(frames=np.ascontiguousarray(frames[:, top : top + ch, left : left + cw]))
    if cfg.flip and rng.random() < 0.5:
        return hflip(cube)
    return cube
