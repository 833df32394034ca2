#!/usr/bin/env python3
"""Benchmark the distance-field backends behind the HD95 metric.

Compares the compiled kernel against the scipy fallback on random masks of
growing size and checks they agree exactly.  Run from the repo root:

    python3 benchmarks/bench_surface.py
"""

import time

import numpy as np

from pagty.metrics import _surface_ref

try:
    from pagty.metrics import _surface_fast
except ImportError:
    _surface_fast = None


def time_backend(fn, masks, repeats=3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for mask in masks:
            fn(mask)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    rng = np.random.default_rng(0)
    print(f"{'size':>8} {'masks':>6} {'fallback':>12} {'compiled':>12} {'speedup':>8}")
    for size in (32, 64, 128, 256, 512):
        n_masks = max(2, 2048 // size)
        masks = [rng.random((size, size)) < 0.25 for _ in range(n_masks)]
        ref_t = time_backend(_surface_ref.distance_field, masks)
        if _surface_fast is None:
            print(f"{size:>8} {n_masks:>6} {ref_t * 1e3:>10.1f}ms {'missing':>12} {'-':>8}")
            continue
        fast_t = time_backend(_surface_fast.distance_field, masks)
        for mask in masks[:2]:
            np.testing.assert_array_equal(
                _surface_fast.distance_field(mask), _surface_ref.distance_field(mask)
            )
        print(
            f"{size:>8} {n_masks:>6} {ref_t * 1e3:>10.1f}ms {fast_t * 1e3:>10.1f}ms "
            f"{ref_t / fast_t:>7.1f}x"
        )
    if _surface_fast is None:
        print("compiled kernel not built; install with `pip install -e .` to compare")


if __name__ == "__main__":
    main()
