"""Deterministic grouped k-fold assignment.

Records sharing a group id (patient/scan) always land in the same fold.
The assignment is a pure function of (records, k, runs, seed): each run
shuffles the sorted group list with its own seeded generator and splits it
into k nearly equal chunks (sizes differ by at most one group).
"""

import numpy as np

from ..errors import ConfigError, DataError


def make_folds(records, k: int = 5, runs: int = 3, seed: int = 0) -> list[list[list[int]]]:
    """Fold assignment as runs x folds x record-index lists."""
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if runs < 1:
        raise ConfigError(f"runs must be >= 1, got {runs}")
    by_group: dict[str, list[int]] = {}
    for idx, rec in enumerate(records):
        by_group.setdefault(rec.group_id, []).append(idx)
    groups = sorted(by_group)
    if len(groups) < k:
        raise DataError(f"need at least {k} groups for {k} folds, got {len(groups)}")

    assignment = []
    for run in range(runs):
        rng = np.random.default_rng([seed, run])
        order = [groups[i] for i in rng.permutation(len(groups))]
        base, extra = divmod(len(order), k)
        folds, start = [], 0
        for fold_idx in range(k):
            size = base + (1 if fold_idx < extra else 0)
            members = order[start : start + size]
            start += size
            folds.append(sorted(i for g in members for i in by_group[g]))
        assignment.append(folds)
    return assignment
