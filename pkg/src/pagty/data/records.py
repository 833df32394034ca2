"""Dataset discovery and PNG reading/writing.

Expected layout: ``root/images/<stem>.png`` and ``root/masks/<stem>.png``
(8- or 16-bit images, 8-bit class-id masks), with an optional
``groups.csv`` mapping stems to scan/patient ids for grouped fold splits.
"""

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DataError

DEFAULT_LAYOUT = {"images_dir": "images", "masks_dir": "masks", "groups_csv": "groups.csv"}


@dataclass(frozen=True)
class SampleRecord:
    image_path: Path
    mask_path: Path
    group_id: str
    split: str = "train"


def scan_dataset(root_dir, layout: dict | None = None) -> list[SampleRecord]:
    """Collect matched image/mask pairs in deterministic stem order."""
    root = Path(root_dir)
    cfg = dict(DEFAULT_LAYOUT)
    if layout:
        cfg.update(layout)
    images_dir = root / cfg["images_dir"]
    masks_dir = root / cfg["masks_dir"]
    if not images_dir.is_dir():
        raise DataError(f"missing images directory {images_dir}")
    if not masks_dir.is_dir():
        raise DataError(f"missing masks directory {masks_dir}")

    def index(directory: Path) -> dict[str, Path]:
        by_stem: dict[str, Path] = {}
        for path in sorted(directory.iterdir()):
            if not path.is_file():
                continue
            if path.stem in by_stem:
                raise DataError(
                    f"ambiguous stem {path.stem!r}: {by_stem[path.stem].name} "
                    f"and {path.name} both present in {directory}"
                )
            by_stem[path.stem] = path
        return by_stem

    images = index(images_dir)
    masks = index(masks_dir)
    missing = sorted(set(images) - set(masks))
    if missing:
        raise DataError(f"images without masks: {', '.join(missing)}")
    orphans = sorted(set(masks) - set(images))
    if orphans:
        warnings.warn(f"masks without images ignored: {', '.join(orphans)}", stacklevel=2)

    groups = {}
    groups_path = root / cfg["groups_csv"]
    if groups_path.is_file():
        with open(groups_path, newline="") as fh:
            for row in csv.DictReader(fh):
                groups[row["stem"]] = row["group_id"]

    return [
        SampleRecord(
            image_path=images[stem],
            mask_path=masks[stem],
            group_id=groups.get(stem, stem),
        )
        for stem in sorted(images)
    ]


def load_image(path, channels: int = 3) -> np.ndarray:
    """Read an image as float32 [C,H,W] scaled to [0,1]."""
    try:
        with Image.open(path) as img:
            if img.mode in ("I", "I;16", "I;16B"):
                arr = np.asarray(img, dtype=np.float32) / 65535.0
            elif img.mode in ("L", "P"):
                arr = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
            else:
                arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except OSError as e:
        raise DataError(f"cannot read image {path}: {e}") from e
    if arr.ndim == 2:
        arr = np.repeat(arr[None], channels, axis=0)
    else:
        arr = arr.transpose(2, 0, 1)
        if arr.shape[0] != channels:
            if channels == 1:
                arr = arr.mean(axis=0, keepdims=True)
            else:
                raise DataError(
                    f"{path}: has {arr.shape[0]} channels, model expects {channels}"
                )
    return np.ascontiguousarray(arr)


def load_mask(path) -> np.ndarray:
    """Read a class-id mask as int64 [H,W]."""
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L") if img.mode not in ("L", "P", "I") else img)
    except OSError as e:
        raise DataError(f"cannot read mask {path}: {e}") from e
    return arr.astype(np.int64)


def save_mask(path, mask: np.ndarray) -> None:
    arr = np.asarray(mask)
    if arr.min() < 0 or arr.max() > 255:
        raise DataError("mask ids must fit in 8 bits to be saved as PNG")
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path, format="PNG")
