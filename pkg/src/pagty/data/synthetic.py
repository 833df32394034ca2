"""Synthetic shapes dataset for desk-scale end-to-end runs.

Images are noisy backgrounds with filled ellipses and rectangles; every
foreground class draws its shapes inside its own intensity band, so the
task is learnable from intensity plus shape alone.  Masks record exact
class ids.  Generation is deterministic: the same spec writes byte-
identical trees.
"""

import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ConfigError, DataError


@dataclass(frozen=True)
class SyntheticSpec:
    n_images: int = 20
    image_size: tuple[int, int] = (64, 64)
    classes: int = 3
    shapes_per_image: tuple[int, int] = (2, 4)
    seed: int = 7

    def __post_init__(self):
        if self.n_images < 1:
            raise ConfigError(f"n_images must be >= 1, got {self.n_images}")
        if self.classes < 2:
            raise ConfigError(f"need background plus >= 1 class, got {self.classes}")
        lo, hi = self.shapes_per_image
        if not 1 <= lo <= hi:
            raise ConfigError(f"bad shapes_per_image range {self.shapes_per_image}")


def _class_band(cls: int, classes: int) -> tuple[float, float]:
    # evenly spaced, non-overlapping intensity bands above the background
    n_fg = classes - 1
    width = 0.55 / n_fg
    lo = 0.40 + (cls - 1) * width
    return lo, lo + 0.8 * width


def _paint_shape(image, mask, cls, classes, rng):
    h, w = mask.shape
    lo, hi = _class_band(cls, classes)
    value = rng.uniform(lo, hi)
    cy, cx = rng.uniform(0.2, 0.8) * h, rng.uniform(0.2, 0.8) * w
    ry, rx = rng.uniform(0.08, 0.22) * h, rng.uniform(0.08, 0.22) * w
    if rng.random() < 0.5:
        yy, xx = np.mgrid[0:h, 0:w]
        inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    else:
        inside = np.zeros((h, w), dtype=bool)
        y0, y1 = int(max(cy - ry, 0)), int(min(cy + ry, h - 1)) + 1
        x0, x1 = int(max(cx - rx, 0)), int(min(cx + rx, w - 1)) + 1
        inside[y0:y1, x0:x1] = True
    image[inside] = value
    mask[inside] = cls


def generate_synthetic(spec: SyntheticSpec, out_dir, overwrite: bool = False) -> Path:
    """Write the dataset under ``out_dir`` and return that path."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        if not overwrite:
            raise DataError(f"output directory {out} is not empty; pass overwrite to replace it")
        shutil.rmtree(out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(spec.seed)
    h, w = spec.image_size
    n_fg = spec.classes - 1
    for i in range(spec.n_images):
        image = rng.uniform(0.02, 0.18, size=(h, w))
        mask = np.zeros((h, w), dtype=np.uint8)
        lo, hi = spec.shapes_per_image
        n_shapes = int(rng.integers(lo, hi + 1))
        # one guaranteed shape per image cycles through the classes so every
        # class appears somewhere in the dataset
        classes = [1 + (i % n_fg)] + [int(rng.integers(1, n_fg + 1)) for _ in range(n_shapes - 1)]
        for cls in classes:
            _paint_shape(image, mask, cls, spec.classes, rng)
        image = np.clip(image + rng.normal(0.0, 0.015, size=(h, w)), 0.0, 1.0)
        pixels = np.round(image * 255).astype(np.uint8)
        Image.fromarray(pixels, mode="L").save(out / "images" / f"sample_{i:03d}.png")
        Image.fromarray(mask, mode="L").save(out / "masks" / f"sample_{i:03d}.png")
    return out
