"""
Command Line Interface

Subcommands: gen-masks, encode, decode, train, eval, flops, dynrange, synth,
crsweep and serve. Every subcommand validates its inputs before computing,
writes its outputs atomically, and leaves one JSON run record (inputs, seeds,
version, results) under the run directory.

Exit status: 0 on success, 1 on any toolkit error with a single-line
diagnostic on stderr, 2 on usage errors.
"""
import argparse
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Type, TypeVar

import numpy as np
from pydantic import BaseModel, ValidationError

from app.config import app_config, load_config_file, pin_threads
from app.core.container import atomic_write_bytes, load_tensor, save_tensor
from app.errors import ConfigError, SciError, ShapeError
from app.net.checkpoint import load_checkpoint
from app.net.flops import count_flops
from app.net.networkConfiguration import NetworkConfig
from app.pipeline.crsweep import cr_sweep
from app.pipeline.data import AugmentConfig, augment, build_manifest, load_clip, save_frames
from app.pipeline.dynrange import dynrange_experiment
from app.pipeline.evaluate import evaluate
from app.pipeline.scenes import SceneKind, synth_scene
from app.pipeline.train import TrainConfig, train
from app.recon.decode import decode
from app.recon.gaptv import GapTvConfig, gap_tv_decode
from app.sensing.domain import MaskSet, NoiseModel, QuantSpec, VideoCube
from app.sensing.forward import encode, export_png, load_measurement, quantize, save_measurement
from app.sensing.masks import degrade, gen_rs, gen_uss, load_masks, save_masks, validate

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)


class RunRecord(BaseModel):
    command: str
    argv: List[str]
    version: str
    started: str
    seconds: float = 0.0
    threads: Optional[int] = None
    seeds: Dict[str, int] = {}
    inputs: Dict[str, Any] = {}
    outputs: List[str] = []
    results: Dict[str, Any] = {}


# =============================================================================
# Helpers
# =============================================================================


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _flat_model(model: Type[M], path: Optional[str], **overrides: Any) -> M:
    """Validate a key=value config file (comma values become lists) plus CLI overrides."""
    values: Dict[str, Any] = {}
    if path:
        for key, value in load_config_file(path).items():
            values[key] = value.split(",") if "," in value else value
    values.update({k: v for k, v in overrides.items() if v is not None})
    return model(**values)


def _load_video(path: str) -> VideoCube:
    frames = load_tensor(path)
    if frames.ndim != 3:
        raise ShapeError(f"{path}: expected a [T, H, W] video tensor, got shape {frames.shape}")
    return VideoCube(frames=frames)


def _synth_clips(kinds: str, count: int, masks: MaskSet, seed: int) -> List[Tuple[str, VideoCube]]:
    t, h, w = masks.extents
    names = [SceneKind(k) for k in kinds.split(",")]
    clips = []
    for i in range(count):
        kind = names[i % len(names)]
        clips.append((f"{kind.value}-{seed + i}", synth_scene(kind, t, h, w, seed=seed + i)))
    return clips


def _dataset_clips(root: str, masks: MaskSet) -> List[Tuple[str, VideoCube]]:
    t, h, w = masks.extents
    manifest = build_manifest(root, split="test", min_frames=t)
    center = AugmentConfig(crop=(h, w), random_crop=False, flip=False, scale=False)
    return [(os.path.basename(c.directory), augment(load_clip(c, 0, t), center)) for c in manifest.clips]


# =============================================================================
# Subcommands
# =============================================================================


def cmd_gen_masks(args: argparse.Namespace, record: RunRecord) -> None:
    if args.scheme == "rs":
        masks = gen_rs(args.t, args.h, args.w, density=args.density, seed=args.seed)
    else:
        masks = gen_uss(args.t, args.h, args.w, seed=args.seed)
    if args.blur or args.shift_y or args.shift_x:
        masks = degrade(masks, blur_sigma=args.blur, shift=(args.shift_y, args.shift_x))
    report = validate(masks)
    save_masks(masks, args.out)
    record.seeds["masks"] = args.seed
    record.outputs.append(args.out)
    record.results["mask_report"] = report.model_dump()
    print(f"wrote {masks.scheme.value} masks {masks.extents} to {args.out} (valid: {report.passed})")


def cmd_encode(args: argparse.Namespace, record: RunRecord) -> None:
    masks = load_masks(args.masks)
    t, h, w = masks.extents
    if args.video:
        video = _load_video(args.video)
    else:
        video = synth_scene(SceneKind(args.scene), t, h, w, seed=args.seed, brightness=args.brightness)
    noise = NoiseModel(kind="gaussian" if args.noise_sigma > 0 else "none", sigma=args.noise_sigma, seed=args.seed)
    quant = QuantSpec(bits=args.bits, full_scale=args.full_scale, gain=args.gain) if args.quantize else None
    y = encode(video, masks, noise)
    if quant is not None:
        y = quantize(y, quant)
        record.results["saturation_fraction"] = y.saturation_fraction
    save_measurement(y, args.out)
    record.seeds.update(scene=args.seed, noise=args.seed)
    record.outputs.append(args.out)
    if args.png:
        export_png(y, args.png, normalize=args.normalize)
        record.outputs.append(args.png)
    print(f"wrote measurement {y.extents} to {args.out}")


def cmd_decode(args: argparse.Namespace, record: RunRecord) -> None:
    masks = load_masks(args.masks)
    y = load_measurement(args.measurement)
    if args.checkpoint:
        checkpoint = load_checkpoint(args.checkpoint)
        cube = decode(y, masks, checkpoint)
        record.inputs["checkpoint"] = args.checkpoint
    else:
        cfg = _flat_model(GapTvConfig, args.gap_config, iterations=args.iterations)
        cube = gap_tv_decode(y, masks, cfg)
        record.inputs["gap_tv"] = cfg.model_dump()
    save_tensor(args.out, cube.frames.astype(np.float32))
    record.outputs.append(args.out)
    if args.png_dir:
        record.outputs.extend(save_frames(cube, args.png_dir))
    print(f"wrote decoded video {cube.extents} to {args.out}")


def cmd_train(args: argparse.Namespace, record: RunRecord) -> None:
    masks = load_masks(args.masks)
    t, h, w = masks.extents
    net = _flat_model(NetworkConfig, args.net_config, t=t, h=h, w=w, **_preset(args.preset, args.net_config))
    cfg = _flat_model(TrainConfig, args.config, steps=args.steps, learning_rate=args.lr, seed=args.seed)
    if args.dataset:
        dataset = build_manifest(args.dataset, split="train", min_frames=t)
    else:
        dataset = [clip for _, clip in _synth_clips(args.synth, args.clips, masks, cfg.seed)]
    checkpoint = train(dataset, masks, net, cfg, output=args.out)
    record.seeds.update(train=cfg.seed, masks=masks.seed)
    record.inputs.update(network=net.model_dump(), train=cfg.model_dump())
    record.outputs.append(args.out)
    history = checkpoint.loss_history
    record.results.update(steps=checkpoint.step, initial_loss=history[0] if history else None,
                          final_loss=history[-1] if history else None)
    print(f"trained {checkpoint.step} steps; checkpoint at {args.out}")


def _preset(name: str, config_path: Optional[str]) -> Dict[str, Any]:
    if config_path:
        return {}
    preset = NetworkConfig.toy() if name == "toy" else NetworkConfig.full()
    return {k: v for k, v in preset.model_dump().items() if k not in ("t", "h", "w")}


def cmd_eval(args: argparse.Namespace, record: RunRecord) -> None:
    masks = load_masks(args.masks)
    clips = _dataset_clips(args.dataset, masks) if args.dataset else _synth_clips(args.synth, args.clips, masks, args.seed)
    decoder = args.checkpoint or "gap-tv"
    table = evaluate(clips, masks, decoder, gap_tv=_flat_model(GapTvConfig, args.gap_config))
    record.inputs["decoder"] = decoder
    record.results["table"] = table.records()
    if args.out:
        atomic_write_bytes(args.out, (table.render() + "\n").encode("utf-8"))
        record.outputs.append(args.out)
    print(table.render())


def cmd_flops(args: argparse.Namespace, record: RunRecord) -> None:
    config = NetworkConfig(t=args.t, h=args.h, w=args.w, c=args.c, s=args.s, g=args.g, heads=args.heads, blocks=args.blocks)
    report = count_flops(config)
    record.results["flops"] = report.model_dump()
    print(report.render())


def cmd_dynrange(args: argparse.Namespace, record: RunRecord) -> None:
    scene = synth_scene(SceneKind(args.scene), args.t, args.h, args.w, seed=args.seed, brightness=args.brightness)
    decoder = load_checkpoint(args.checkpoint) if args.checkpoint else "gap-tv"
    report = dynrange_experiment(
        scene,
        _floats(args.gains),
        quant=QuantSpec(bits=args.bits),
        seed=args.seed,
        decoder=decoder,
        noise=NoiseModel(kind="gaussian" if args.read_noise > 0 else "none", sigma=args.read_noise, seed=args.seed),
    )
    record.seeds["masks"] = args.seed
    record.results["read_noise"] = report.read_noise
    record.results["rows"] = [row.model_dump() for row in report.rows]
    record.results["crossover_gain"] = report.crossover_gain()
    print(report.render())
    print(f"crossover gain (USS >= RS + 3 dB): {report.crossover_gain()}")


def cmd_synth(args: argparse.Namespace, record: RunRecord) -> None:
    cube = synth_scene(SceneKind(args.kind), args.t, args.h, args.w, seed=args.seed, speed=args.speed,
                       brightness=args.brightness)
    save_tensor(args.out, cube.frames.astype(np.float32))
    record.seeds["scene"] = args.seed
    record.outputs.append(args.out)
    if args.png_dir:
        record.outputs.extend(save_frames(cube, args.png_dir))
    print(f"wrote {args.kind} scene {cube.extents} to {args.out}")


def cmd_crsweep(args: argparse.Namespace, record: RunRecord) -> None:
    rows = cr_sweep(_ints(args.frames), args.h, args.w, SceneKind(args.kind), seed=args.seed,
                    gap_tv=_flat_model(GapTvConfig, args.gap_config))
    record.results["rows"] = [row.model_dump() for row in rows]
    for row in rows:
        print(f"T={row.frames:<4d} PSNR {row.psnr:6.2f} dB  SSIM {row.ssim:.4f}  X_e {row.coarse_psnr:6.2f} dB  {row.seconds:.2f}s")


def cmd_serve(args: argparse.Namespace, record: RunRecord) -> None:
    import uvicorn

    from app.api import create_app

    record.inputs.update(host=args.host, port=args.port)
    uvicorn.run(create_app(), host=args.host, port=args.port, log_level=app_config.LOG_LEVEL.lower())


# =============================================================================
# Parser and dispatch
# =============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sci", description="Snapshot compressive imaging toolkit")
    parser.add_argument("--threads", type=int, default=None, help="BLAS threads (1 for bitwise determinism)")
    parser.add_argument("--run-dir", default=None, help="directory for the JSON run record")
    sub = parser.add_subparsers(dest="command", required=True)

    def extents(p: argparse.ArgumentParser, t: int = 8, h: int = 32, w: int = 32) -> None:
        p.add_argument("--t", type=int, default=t)
        p.add_argument("--h", type=int, default=h)
        p.add_argument("--w", type=int, default=w)

    p = sub.add_parser("gen-masks", help="generate RS or USS masks")
    p.add_argument("--scheme", choices=["rs", "uss"], required=True)
    extents(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--blur", type=float, default=0.0, help="misalignment blur sigma in pixels")
    p.add_argument("--shift-y", type=float, default=0.0)
    p.add_argument("--shift-x", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_gen_masks)

    p = sub.add_parser("encode", help="encode a video into one measurement")
    p.add_argument("--masks", required=True)
    source = p.add_mutually_exclusive_group()
    source.add_argument("--video", help="STNS [T,H,W] video")
    source.add_argument("--scene", choices=[k.value for k in SceneKind], default=SceneKind.MOVING_SQUARE.value)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--brightness", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--quantize", action="store_true")
    p.add_argument("--bits", type=int, default=8)
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--full-scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--png", help="also export the measurement as PNG")
    p.add_argument("--normalize", action="store_true", help="scale the PNG by the measurement maximum")
    p.set_defaults(handler=cmd_encode)

    p = sub.add_parser("decode", help="decode a measurement")
    p.add_argument("--masks", required=True)
    p.add_argument("--measurement", required=True)
    p.add_argument("--checkpoint", help="trained network; GAP-TV when omitted")
    p.add_argument("--gap-config", help="key=value GAP-TV settings")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--png-dir")
    p.set_defaults(handler=cmd_decode)

    p = sub.add_parser("train", help="train the reconstruction network")
    p.add_argument("--masks", required=True)
    data = p.add_mutually_exclusive_group()
    data.add_argument("--dataset", help="directory of PNG clip directories")
    data.add_argument("--synth", default="moving-square,bouncing-dot", help="comma-separated synthetic scene kinds")
    p.add_argument("--clips", type=int, default=2)
    p.add_argument("--preset", choices=["toy", "full"], default="toy")
    p.add_argument("--net-config", help="key=value network settings")
    p.add_argument("--config", help="key=value training settings")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="tabulate PSNR / SSIM / time")
    p.add_argument("--masks", required=True)
    data = p.add_mutually_exclusive_group()
    data.add_argument("--dataset")
    data.add_argument("--synth", default="moving-square,drifting-gradient,bouncing-dot")
    p.add_argument("--clips", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", help="trained network; GAP-TV when omitted")
    p.add_argument("--gap-config")
    p.add_argument("--out", help="write the table here")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("flops", help="attention complexity report")
    extents(p)
    p.add_argument("--c", type=int, default=24)
    p.add_argument("--s", type=int, default=4)
    p.add_argument("--g", type=int, default=4)
    p.add_argument("--heads", type=int, default=1)
    p.add_argument("--blocks", type=int, default=2)
    p.set_defaults(handler=cmd_flops)

    p = sub.add_parser("dynrange", help="RS vs USS under increasing illumination")
    p.add_argument("--scene", choices=[k.value for k in SceneKind], default=SceneKind.DRIFTING_GRADIENT.value)
    extents(p)
    p.add_argument("--brightness", type=float, default=1.0)
    p.add_argument("--gains", default="0.125,0.25,0.5,1.0")
    p.add_argument("--bits", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--read-noise", type=float, default=0.0, help="read-noise sigma at unit gain, scene units")
    p.add_argument("--checkpoint")
    p.set_defaults(handler=cmd_dynrange)

    p = sub.add_parser("synth", help="render a synthetic scene")
    p.add_argument("--kind", choices=[k.value for k in SceneKind], default=SceneKind.MOVING_SQUARE.value)
    extents(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--speed", type=float, default=None)
    p.add_argument("--brightness", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--png-dir")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("crsweep", help="GAP-TV quality versus compression ratio")
    p.add_argument("--frames", default="8,16,32")
    p.add_argument("--h", type=int, default=32)
    p.add_argument("--w", type=int, default=32)
    p.add_argument("--kind", choices=[k.value for k in SceneKind], default=SceneKind.MOVING_SQUARE.value)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gap-config")
    p.set_defaults(handler=cmd_crsweep)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--host", default=app_config.API_HOST)
    p.add_argument("--port", type=int, default=app_config.API_PORT)
    p.set_defaults(handler=cmd_serve)
    return parser


def _write_record(record: RunRecord, run_dir: str) -> None:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
    path = os.path.join(run_dir, f"{stamp}-{record.command}.json")
    atomic_write_bytes(path, record.model_dump_json(indent=2).encode("utf-8"))
    logger.debug("Run record written to %s", path)


def _one_line(error: BaseException) -> str:
    if isinstance(error, ValidationError):
        error = ConfigError("; ".join(f"{'.'.join(map(str, e['loc'])) or 'value'}: {e['msg']}" for e in error.errors()))
    return " ".join(str(error).split())


def cli_dispatch(argv: Sequence[str], handlers: Optional[Dict[str, Callable]] = None) -> int:
    """
    Parse ``argv``, run the subcommand and return the exit status.

    ``handlers`` maps subcommand names to replacement handlers.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as e:
        return int(e.code or 0)
    record = RunRecord(
        command=args.command,
        argv=list(argv),
        version=app_config.VERSION,
        started=datetime.now(timezone.utc).isoformat(),
    )
    started = time.perf_counter()
    logger.info("Running %s", args.command)
    try:
        if args.threads is not None:
            pin_threads(args.threads)
            record.threads = args.threads
        (handlers or {}).get(args.command, args.handler)(args, record)
    except (SciError, ValidationError, OSError, ValueError) as e:
        print(f"error: {_one_line(e)}", file=sys.stderr)
        return 1
    record.seconds = time.perf_counter() - started
    _write_record(record, args.run_dir or app_config.RUN_DIR)
    return 0
