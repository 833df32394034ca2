"""Overlap metrics on binary masks: Dice, IoU and micro-averaged pixel F1."""

import numpy as np

from ..errors import DataError, ShapeError


def _as_pair(pred, gt):
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return pred, gt


def dice(pred, gt) -> float:
    """2|A n B| / (|A| + |B|); 1.0 when both masks are empty."""
    pred, gt = _as_pair(pred, gt)
    total = int(pred.sum()) + int(gt.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((pred & gt).sum()) / total


def iou(pred, gt) -> float:
    """|A n B| / |A u B|; 1.0 when both masks are empty."""
    pred, gt = _as_pair(pred, gt)
    union = int((pred | gt).sum())
    if union == 0:
        return 1.0
    return int((pred & gt).sum()) / union


def f1_micro(preds, gts, cls: int) -> float:
    """Pixel F1 for class ``cls`` with TP/FP/FN pooled over the whole set.

    Inputs are aligned lists of integer label masks.  Pooling makes this
    differ from the mean of per-image Dice whenever image difficulty varies.
    """
    if len(preds) == 0:
        raise DataError("f1_micro needs at least one mask pair")
    if len(preds) != len(gts):
        raise ShapeError(f"got {len(preds)} predictions but {len(gts)} ground truths")
    tp = fp = fn = 0
    for pred, gt in zip(preds, gts):
        p, g = _as_pair(np.asarray(pred) == cls, np.asarray(gt) == cls)
        tp += int((p & g).sum())
        fp += int((p & ~g).sum())
        fn += int((~p & g).sum())
    if tp == fp == fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)
