"""
Application Configuration Module

This module centralizes all configuration settings for the snapshot compressive
imaging toolkit. It provides a single source of truth for defaults used by the
sensing, network, reconstruction and pipeline layers, and the flat key=value
configuration file reader used by the command line.
"""
import logging
import os
from typing import Dict, List


class AppConfig:
    """Main application configuration class."""

    # API Configuration
    API_HOST: str = "127.0.0.1"
    API_PORT: int = 8000
    API_BASE_URL: str = f"http://{API_HOST}:{API_PORT}"
    API_VERSION: str = "v1"
    VERSION: str = "0.1.0"

    # Run records and outputs
    RUN_DIR: str = os.getenv("SCI_RUN_DIR", "runs")
    TENSOR_EXTENSION: str = "stns"
    MAX_UPLOAD_SIZE_MB: int = 64

    # Threading (1 guarantees bitwise determinism)
    THREADS: int = int(os.getenv("SCI_THREADS", "0"))

    # Logging Configuration
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    ENABLE_VERBOSE_LOGGING: bool = os.getenv("VERBOSE_LOGGING", "false").lower() == "true"
    LOG_FORMAT: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class SensingDefaults:
    """Defaults for mask generation and the optical forward model."""

    RS_DENSITY: float = 0.5
    QUANT_BITS: int = 8
    ALLOWED_BITS: List[int] = [8, 10, 12, 16]
    COVERAGE_EPS: float = 1e-6  # clamp on the sum of masks in the coarse estimate
    BLUR_TRUNCATE: float = 4.0  # Gaussian kernel radius in sigmas


class NetworkDefaults:
    """Reference network configurations."""

    LEAKY_SLOPE: float = 0.1
    INIT_STD: float = 0.02
    NORM_EPS: float = 1e-5

    # Toy reference config (desk scale)
    TOY: Dict[str, int] = {"t": 8, "h": 32, "w": 32, "c": 24, "s": 4, "g": 4, "heads": 2, "blocks": 2}

    # Full-scale config; 224 keeps the half-resolution extents divisible by 7
    FULL: Dict[str, int] = {"t": 8, "h": 224, "w": 224, "c": 192, "s": 7, "g": 7, "heads": 4, "blocks": 4}


class TrainingDefaults:
    """Optimizer and schedule defaults for the toy training loop."""

    LEARNING_RATE: float = 1e-4
    BETA1: float = 0.9
    BETA2: float = 0.999
    ADAM_EPS: float = 1e-8
    STEPS: int = 500
    DECAY_STEPS: int = 0  # 0 disables step decay
    DECAY_FACTOR: float = 0.5
    FINETUNE_LR_FACTOR: float = 0.1
    SCALES: List[float] = [0.75, 1.0, 1.25]
    LOG_EVERY: int = 25


class GapTvDefaults:
    """Defaults for the GAP-TV baseline decoder."""

    ITERATIONS: int = 60
    TV_WEIGHT: float = 0.1
    TV_INNER_STEPS: int = 5
    ACCELERATE: bool = True


def configure_logging() -> None:
    """Configure the root logger once from the application settings."""
    level = logging.DEBUG if app_config.ENABLE_VERBOSE_LOGGING else app_config.LOG_LEVEL
    logging.basicConfig(level=level, format=app_config.LOG_FORMAT)


BLAS_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def pin_threads(threads: int) -> None:
    """
    Pin the BLAS thread pools to ``threads``.

    The pools read these variables when numpy is first imported, so pinning
    takes full effect only before that import; later calls still govern any
    worker process started afterwards.
    """
    if threads < 1:
        raise ValueError(f"threads must be a positive integer, got {threads}")
    for var in BLAS_THREAD_VARS:
        os.environ[var] = str(threads)
    app_config.THREADS = threads


def load_config_file(path: str) -> Dict[str, str]:
    """
    Read a flat key=value configuration file.

    Blank lines and lines starting with '#' are ignored. Values are returned
    as strings; the pydantic models they feed do the type coercion.

    Raises:
        ConfigError: on a malformed line or a duplicated key
    """
    from app.errors import ConfigError

    values: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicated key {key!r}")
            values[key] = value
    return values


# Create global configuration instances
app_config = AppConfig()
sensing_defaults = SensingDefaults()
network_defaults = NetworkDefaults()
training_defaults = TrainingDefaults()
gap_tv_defaults = GapTvDefaults()
