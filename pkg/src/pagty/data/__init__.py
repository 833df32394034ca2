"""Dataset scanning, fold splitting, augmentation and synthetic data."""

from .augment import AugmentationPolicy, augment, per_sample_rng
from .folds import make_folds
from .records import SampleRecord, load_image, load_mask, save_mask, scan_dataset
from .synthetic import SyntheticSpec, generate_synthetic

__all__ = [
    "AugmentationPolicy",
    "SampleRecord",
    "SyntheticSpec",
    "augment",
    "generate_synthetic",
    "load_image",
    "load_mask",
    "make_folds",
    "per_sample_rng",
    "save_mask",
    "scan_dataset",
]
