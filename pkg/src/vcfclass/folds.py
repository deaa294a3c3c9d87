"""Deterministic k-fold assignment with stratification and optional grouping."""

from __future__ import annotations

import warnings

import numpy as np


def kfold_split(n: int, k: int = 10, seed: int = 0, stratify_by=None,
                group_by=None) -> np.ndarray:
    """Fold index (0..k-1) per instance.

    Stratified mode deals each class's (seeded-shuffled) instances round-robin
    with a running fold pointer, so fold sizes stay within 1 of n/k and each
    fold's class counts within 1 of the global ratio. With ``group_by`` set,
    whole groups go to the currently smallest fold (stratification then only
    best-effort); a group larger than n/k draws a warning, not an error.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} instances available")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    folds = np.full(n, -1, dtype=np.int64)

    if group_by is not None:
        groups = np.asarray(group_by)
        uniq = np.unique(groups)
        if uniq.size < k:
            raise ValueError(f"only {uniq.size} groups for k={k} folds")
        sizes = np.array([(groups == g).sum() for g in uniq])
        if sizes.max() > n / k:
            warnings.warn(
                f"largest group has {sizes.max()} instances (> n/k = {n / k:.1f}); "
                f"balanced grouped folds are infeasible", stacklevel=2)
        order = rng.permutation(uniq.size)
        by_size = order[np.argsort(-sizes[order], kind="stable")]
        fold_load = np.zeros(k, dtype=np.int64)
        for gi in by_size:
            target = int(np.argmin(fold_load))
            sel = groups == uniq[gi]
            folds[sel] = target
            fold_load[target] += int(sel.sum())
        return folds

    if stratify_by is None:
        order = rng.permutation(n)
        folds[order] = np.arange(n) % k
        return folds

    strata = np.asarray(stratify_by)
    pointer = 0
    for value in np.unique(strata):
        idx = np.flatnonzero(strata == value)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = (pointer + np.arange(idx.size)) % k
        pointer = (pointer + idx.size) % k
    return folds
