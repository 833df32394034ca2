"""Per-class evaluation reports, fold aggregation and table emission.

Definitions used throughout: DSC/IoU/HD95 per class are the mean of
per-image values over the images whose ground truth contains that class;
F1 is the micro-averaged pixel F1 with counts pooled over the whole set.
Only foreground classes (id > 0) are reported.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, ShapeError
from .overlap import dice, f1_micro, iou
from .surface import hd95

AGGREGATION_SCHEMES = ("mean_per_image", "five_fold", "three_runs_of_five_fold")
METRIC_NAMES = ("dsc", "iou", "f1", "hd95")


@dataclass
class MaskBatch:
    """Integer label masks [B, H, W] with values in [0, num_classes)."""

    data: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ShapeError(f"mask batch must be [B,H,W], got {self.data.ndim} axes")
        if not np.issubdtype(self.data.dtype, np.integer):
            raise DataError(f"mask batch must be integer-typed, got {self.data.dtype}")
        if self.num_classes < 1:
            raise DataError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.data.size:
            lo, hi = int(self.data.min()), int(self.data.max())
            if lo < 0 or hi >= self.num_classes:
                raise DataError(
                    f"mask values must lie in [0, {self.num_classes}), got [{lo}, {hi}]"
                )

    def __len__(self):
        return self.data.shape[0]


@dataclass
class ClassMetrics:
    dsc: float
    iou: float
    f1: float
    hd95: float


@dataclass
class MetricsReport:
    per_class: dict[int, ClassMetrics]
    mean_dsc: float
    mean_iou: float
    mean_f1: float
    mean_hd95: float
    flags: list[str] = field(default_factory=list)
    fold_stats: dict[str, tuple[float, float]] | None = None


def _foreground_means(per_class: dict[int, ClassMetrics]) -> tuple[float, float, float, float]:
    def mean_of(attr):
        values = [getattr(m, attr) for m in per_class.values()]
        return float(np.nanmean(values)) if values else float("nan")

    return mean_of("dsc"), mean_of("iou"), mean_of("f1"), mean_of("hd95")


def evaluate_masks(preds: MaskBatch, gts: MaskBatch, spacing=(1.0, 1.0)) -> MetricsReport:
    """Per-class and mean metrics for aligned prediction/ground-truth batches."""
    if not isinstance(preds, MaskBatch) or not isinstance(gts, MaskBatch):
        raise DataError("evaluate_masks expects MaskBatch inputs")
    if preds.num_classes != gts.num_classes:
        raise DataError(
            f"class counts differ: {preds.num_classes} vs {gts.num_classes}"
        )
    if preds.data.shape != gts.data.shape:
        raise ShapeError(
            f"batch shapes differ: {preds.data.shape} vs {gts.data.shape}"
        )
    flags: list[str] = []
    per_class: dict[int, ClassMetrics] = {}
    n_images = len(gts)
    for cls in range(1, gts.num_classes):
        dsc_vals, iou_vals, hd_vals = [], [], []
        for i in range(n_images):
            gt_mask = gts.data[i] == cls
            if not gt_mask.any():
                continue
            pred_mask = preds.data[i] == cls
            dsc_vals.append(dice(pred_mask, gt_mask))
            iou_vals.append(iou(pred_mask, gt_mask))
            hd_vals.append(hd95(pred_mask, gt_mask, spacing))
            if not pred_mask.any():
                flags.append(
                    f"class {cls} image {i}: empty prediction against non-empty "
                    "ground truth; hd95 set to the image diagonal"
                )
        if dsc_vals:
            cm = ClassMetrics(
                dsc=float(np.mean(dsc_vals)),
                iou=float(np.mean(iou_vals)),
                f1=f1_micro(list(preds.data), list(gts.data), cls),
                hd95=float(np.mean(hd_vals)),
            )
        else:
            flags.append(f"class {cls}: absent from every ground-truth mask")
            cm = ClassMetrics(float("nan"), float("nan"), float("nan"), float("nan"))
        per_class[cls] = cm
    mean_dsc, mean_iou, mean_f1, mean_hd95 = _foreground_means(per_class)
    return MetricsReport(
        per_class=per_class,
        mean_dsc=mean_dsc,
        mean_iou=mean_iou,
        mean_f1=mean_f1,
        mean_hd95=mean_hd95,
        flags=flags,
    )


def _leaf_values(reports, attr):
    return np.array([getattr(r, attr) for r in reports], dtype=np.float64)


def aggregate(reports: list[MetricsReport], scheme: str = "mean_per_image") -> MetricsReport:
    """Reduce leaf reports to mean +/- population std per the given scheme.

    ``five_fold`` treats every report as one fold; ``three_runs_of_five_fold``
    groups consecutive blocks of five folds into runs, averages within each
    run, then takes statistics across the run means.
    """
    if not reports:
        raise DataError("aggregate needs at least one report")
    if scheme not in AGGREGATION_SCHEMES:
        raise DataError(f"unknown scheme {scheme!r}, expected one of {AGGREGATION_SCHEMES}")
    class_sets = {tuple(sorted(r.per_class)) for r in reports}
    if len(class_sets) != 1:
        raise DataError(f"cannot aggregate reports with mixed class sets: {class_sets}")

    stats: dict[str, tuple[float, float]] = {}
    for name, attr in zip(METRIC_NAMES, ("mean_dsc", "mean_iou", "mean_f1", "mean_hd95")):
        values = _leaf_values(reports, attr)
        if scheme == "three_runs_of_five_fold":
            if len(values) % 5 != 0:
                raise DataError(
                    f"three_runs_of_five_fold needs a multiple of 5 reports, got {len(values)}"
                )
            values = values.reshape(-1, 5).mean(axis=1)
        stats[name] = (float(values.mean()), float(values.std()))

    classes = sorted(reports[0].per_class)
    per_class = {
        cls: ClassMetrics(
            **{
                m: float(np.mean([getattr(r.per_class[cls], m) for r in reports]))
                for m in METRIC_NAMES
            }
        )
        for cls in classes
    }
    mean_dsc, mean_iou, mean_f1, mean_hd95 = _foreground_means(per_class)
    flags = [f for r in reports for f in r.flags]
    return MetricsReport(
        per_class=per_class,
        mean_dsc=mean_dsc,
        mean_iou=mean_iou,
        mean_f1=mean_f1,
        mean_hd95=mean_hd95,
        flags=flags,
        fold_stats=stats,
    )


def report_to_csv(report: MetricsReport) -> str:
    """Fixed-schema CSV: one row per foreground class plus a mean row."""
    out = io.StringIO()
    out.write("class,dsc,iou,f1,hd95\n")
    for cls in sorted(report.per_class):
        m = report.per_class[cls]
        out.write(f"{cls},{m.dsc:.6f},{m.iou:.6f},{m.f1:.6f},{m.hd95:.6f}\n")
    out.write(
        f"mean,{report.mean_dsc:.6f},{report.mean_iou:.6f},"
        f"{report.mean_f1:.6f},{report.mean_hd95:.6f}\n"
    )
    return out.getvalue()


def report_to_text(report: MetricsReport) -> str:
    lines = [f"{'class':>8} {'dsc':>10} {'iou':>10} {'f1':>10} {'hd95':>10}"]
    for cls in sorted(report.per_class):
        m = report.per_class[cls]
        lines.append(f"{cls:>8} {m.dsc:>10.4f} {m.iou:>10.4f} {m.f1:>10.4f} {m.hd95:>10.4f}")
    lines.append(
        f"{'mean':>8} {report.mean_dsc:>10.4f} {report.mean_iou:>10.4f} "
        f"{report.mean_f1:>10.4f} {report.mean_hd95:>10.4f}"
    )
    if report.fold_stats:
        parts = [f"{k}={m:.4f}+/-{s:.4f}" for k, (m, s) in report.fold_stats.items()]
        lines.append("fold stats: " + "  ".join(parts))
    for flag in report.flags:
        lines.append(f"note: {flag}")
    return "\n".join(lines) + "\n"
