from .scenes import SceneKind, synth_scene
from .data import AugmentConfig, DatasetManifest, augment, build_manifest, hflip, load_clip, save_frames
from .optim import Adam, learning_rate_at
from .train import TrainConfig, mse_loss, train
from .evaluate import EvalRow, EvalTable, evaluate
from .dynrange import DynRangeReport, DynRangeRow, dynrange_experiment
from .crsweep import CrSweepRow, cr_sweep
