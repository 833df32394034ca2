"""Fallback distance-field backend built on scipy's exact EDT."""

import numpy as np
from scipy import ndimage


def distance_field(mask, spacing=(1.0, 1.0)):
    """Per-pixel Euclidean distance to the nearest foreground pixel of ``mask``.

    Same contract as the compiled backend: float64 [H, W], huge values when
    the mask is empty.
    """
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got {arr.ndim} axes")
    arr = arr.astype(bool)
    if not arr.any():
        return np.full(arr.shape, 1e15, dtype=np.float64)
    return ndimage.distance_transform_edt(~arr, sampling=spacing).astype(np.float64)
