"""Triple-branch CNN-transformer segmentation with dual attention gates.

The encoder fuses a resized-input pyramid, a main CNN path and a four-stage
pyramid transformer through per-level dual attention gates, mixes the
deepest features with a dense transformer bottleneck, and decodes with a
U-Net-style four-stage decoder.  The package also ships segmentation
metrics (Dice, IoU, pixel F1, HD95), a PNG data pipeline with grouped
k-fold splitting and augmentation, and a train/eval/ablation CLI.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, NumericError, ShapeError
from .model import AblationFlags, ModelConfig, PagTransYnet, build_model, compute_loss
from .training import TrainConfig, evaluate, predict, run_ablation, train

__version__ = "0.1.0"

__all__ = [
    "AblationFlags",
    "Checkpoint",
    "ConfigError",
    "DataError",
    "ModelConfig",
    "NumericError",
    "PagTransYnet",
    "ShapeError",
    "TrainConfig",
    "build_model",
    "compute_loss",
    "evaluate",
    "load_checkpoint",
    "predict",
    "run_ablation",
    "save_checkpoint",
    "train",
    "__version__",
]
