"""Segmentation metrics: overlap scores, surface distances and reports."""

from .overlap import dice, f1_micro, iou
from .report import (
    AGGREGATION_SCHEMES,
    ClassMetrics,
    MaskBatch,
    MetricsReport,
    aggregate,
    evaluate_masks,
    report_to_csv,
    report_to_text,
)
from .surface import active_backend, hausdorff, hd95, pooled_surface_distances

__all__ = [
    "AGGREGATION_SCHEMES",
    "ClassMetrics",
    "MaskBatch",
    "MetricsReport",
    "active_backend",
    "aggregate",
    "dice",
    "evaluate_masks",
    "f1_micro",
    "hausdorff",
    "hd95",
    "iou",
    "pooled_surface_distances",
    "report_to_csv",
    "report_to_text",
]
