"""Surface-distance metrics (95th-percentile Hausdorff distance).

The distance-field kernel is the one hot loop of evaluation, so a compiled
implementation is preferred at import time, with the scipy-based fallback
kept API-identical.  Set ``PAGTY_PURE_PYTHON=1`` to force the fallback.
``benchmarks/bench_surface.py`` compares the two.
"""

import math
import os

import numpy as np

from ..errors import ShapeError
from . import _surface_ref

if os.environ.get("PAGTY_PURE_PYTHON"):
    _backend = _surface_ref
else:
    try:
        from . import _surface_fast as _backend  # type: ignore[no-redef]
    except ImportError:
        _backend = _surface_ref

distance_field = _backend.distance_field


def active_backend() -> str:
    """Name of the distance-field backend in use: 'compiled' or 'fallback'."""
    return "compiled" if _backend.__name__.endswith("_surface_fast") else "fallback"


def _check_pair(pred, gt):
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    if pred.ndim != 2:
        raise ShapeError(f"masks must be 2-D, got {pred.ndim} axes")
    return pred, gt


def pooled_surface_distances(pred, gt, spacing=(1.0, 1.0)) -> np.ndarray:
    """Nearest-neighbor distances pooled over both directions.

    One entry per foreground pixel of ``pred`` (distance to the nearest
    foreground pixel of ``gt``) and vice versa.  Both masks must be
    non-empty.
    """
    pred, gt = _check_pair(pred, gt)
    to_gt = distance_field(gt, spacing)[pred]
    to_pred = distance_field(pred, spacing)[gt]
    return np.concatenate([to_gt, to_pred])


def image_diagonal(shape, spacing=(1.0, 1.0)) -> float:
    return math.hypot(shape[0] * spacing[0], shape[1] * spacing[1])


def hd95(pred, gt, spacing=(1.0, 1.0)) -> float:
    """95th percentile (linear interpolation) of the pooled distances.

    Conventions: both masks empty -> 0.0; exactly one empty -> the image
    diagonal length (callers flag this in reports).
    """
    pred, gt = _check_pair(pred, gt)
    pred_any, gt_any = bool(pred.any()), bool(gt.any())
    if not pred_any and not gt_any:
        return 0.0
    if pred_any != gt_any:
        return image_diagonal(pred.shape, spacing)
    pooled = pooled_surface_distances(pred, gt, spacing)
    return float(np.percentile(pooled, 95, method="linear"))


def hausdorff(pred, gt, spacing=(1.0, 1.0)) -> float:
    """The exact (100th percentile) symmetric Hausdorff distance."""
    pred, gt = _check_pair(pred, gt)
    pred_any, gt_any = bool(pred.any()), bool(gt.any())
    if not pred_any and not gt_any:
        return 0.0
    if pred_any != gt_any:
        return image_diagonal(pred.shape, spacing)
    return float(pooled_surface_distances(pred, gt, spacing).max())
