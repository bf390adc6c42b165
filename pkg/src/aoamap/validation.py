"""Fold assignment, the cross-validation driver, and regression metrics."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .kernels.rng import next_u64, stream_seed
from .samples import SampleTable

__all__ = [
    "FoldAssignment",
    "CVReport",
    "assign_random_folds",
    "assign_cluster_folds",
    "folds_from_labels",
    "cross_validate",
    "rmse",
    "pearson_r",
    "r_squared",
]


@dataclass(frozen=True)
class FoldAssignment:
    """Per-row fold ids in [0, k), every fold nonempty."""

    fold: np.ndarray
    k: int
    strategy: str  # "random" | "cluster" | "file"
    seed: int = None

    def __post_init__(self):
        fold = np.ascontiguousarray(np.asarray(self.fold, dtype=np.int64))
        object.__setattr__(self, "fold", fold)
        if fold.ndim != 1 or fold.size == 0:
            raise ValueError("fold ids must form a nonempty 1-D array")
        if self.k < 2:
            raise ValueError(f"need at least 2 folds, got {self.k}")
        counts = np.bincount(fold, minlength=self.k)
        if fold.min() < 0 or fold.max() >= self.k or (counts == 0).any():
            raise ValueError("fold ids must cover 0..k-1 with every fold nonempty")

    def __len__(self) -> int:
        return self.fold.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold, minlength=self.k)

    def rows_in(self, f: int) -> np.ndarray:
        return np.nonzero(self.fold == f)[0]


def _permutation(n: int, seed: int) -> np.ndarray:
    """Fisher-Yates permutation driven by the package's splitmix64 stream, so
    fold splits never depend on numpy's generator internals."""
    perm = np.arange(n, dtype=np.int64)
    state = stream_seed(seed, 0)
    for u in range(n - 1, 0, -1):
        v, state = next_u64(state)
        w = v % (u + 1)
        perm[u], perm[w] = perm[w], perm[u]
    return perm


def assign_random_folds(n: int, k: int, seed: int) -> FoldAssignment:
    """Random partition into k folds whose sizes differ by at most one."""
    if k < 2 or k > n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = _permutation(n, seed)
    fold = np.empty(n, dtype=np.int64)
    base, extra = divmod(n, k)
    start = 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        fold[perm[start:start + size]] = f
        start += size
    return FoldAssignment(fold=fold, k=k, strategy="random", seed=seed)


def assign_cluster_folds(cluster_ids) -> FoldAssignment:
    """One fold per distinct cluster id (leave-cluster-out)."""
    ids = np.asarray(cluster_ids)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("cluster ids must form a nonempty 1-D array")
    uniq, inverse = np.unique(ids, return_inverse=True)
    if uniq.size < 2:
        raise ValueError("need at least 2 distinct clusters")
    return FoldAssignment(fold=inverse.astype(np.int64), k=int(uniq.size), strategy="cluster")


def folds_from_labels(labels) -> FoldAssignment:
    """Wrap externally supplied fold labels (e.g. a CSV column); labels are
    renumbered to 0..k-1 by sorted label order."""
    labels = np.asarray(labels)
    uniq, inverse = np.unique(labels, return_inverse=True)
    if uniq.size < 2:
        raise ValueError("need at least 2 distinct fold labels")
    return FoldAssignment(fold=inverse.astype(np.int64), k=int(uniq.size), strategy="file")


@dataclass(frozen=True)
class CVReport:
    """Out-of-fold performance summary.

    ``rmse_fold_mean`` averages the per-fold RMSEs (each fold weighted
    equally); ``rmse_pooled`` is computed over all out-of-fold predictions at
    once. Both conventions are kept because reported cross-validation errors
    are often ambiguous between them; ``cv_rmse`` exposes the fold-mean one.
    """

    fold_rmse: np.ndarray
    fold_sizes: np.ndarray
    predictions: np.ndarray
    rmse_pooled: float
    rmse_fold_mean: float
    r_squared: float
    pearson_r: float
    folds: FoldAssignment

    @property
    def cv_rmse(self) -> float:
        return self.rmse_fold_mean


def cross_validate(samples: SampleTable, folds: FoldAssignment, config) -> CVReport:
    """Train on each fold's complement, predict the held-out fold, and pool.

    Each fold's forest uses a seed derived from (config.seed, fold), so the
    report is deterministic regardless of fold evaluation order. Correlation
    metrics come out NaN when either vector is constant.
    """
    from . import forest as _forest

    if len(folds) != len(samples):
        raise ValueError("fold assignment does not match sample count")
    n = len(samples)
    preds = np.full(n, np.nan)
    fold_rmse = np.empty(folds.k)
    for f in range(folds.k):
        test_rows = folds.rows_in(f)
        train_rows = np.nonzero(folds.fold != f)[0]
        if train_rows.size < 2:
            raise ValueError(f"fold {f}: complement has {train_rows.size} rows, too few to train")
        fold_config = replace(config, seed=stream_seed(config.seed, f))
        model = _forest.train_forest(samples.subset(train_rows), fold_config)
        p = _forest.predict(model, samples.subset(test_rows).predictors)
        preds[test_rows] = p
        fold_rmse[f] = rmse(p, samples.response[test_rows])

    y = samples.response
    try:
        r = pearson_r(preds, y)
    except ValueError:
        r = float("nan")
    return CVReport(
        fold_rmse=fold_rmse,
        fold_sizes=folds.sizes,
        predictions=preds,
        rmse_pooled=rmse(preds, y),
        rmse_fold_mean=float(fold_rmse.mean()),
        r_squared=r * r,
        pearson_r=r,
        folds=folds,
    )


def _select(pred, truth, mask):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).ravel()
        if mask.shape != pred.shape:
            raise ValueError("mask shape mismatch")
        pred, truth = pred[mask], truth[mask]
    if pred.size == 0:
        raise ValueError("empty selection")
    if not (np.isfinite(pred).all() and np.isfinite(truth).all()):
        raise ValueError("non-finite values in selection; mask them out explicitly")
    return pred, truth


def rmse(pred, truth, mask=None) -> float:
    """Root mean squared error over the (optionally masked) pairs."""
    pred, truth = _select(pred, truth, mask)
    e = pred - truth
    return float(np.sqrt(np.mean(e * e)))


def pearson_r(pred, truth, mask=None) -> float:
    """Pearson correlation; errors on fewer than 2 pairs or zero variance."""
    pred, truth = _select(pred, truth, mask)
    if pred.size < 2:
        raise ValueError("need at least 2 pairs for correlation")
    pc = pred - pred.mean()
    tc = truth - truth.mean()
    denom = np.sqrt((pc * pc).sum() * (tc * tc).sum())
    if denom == 0:
        raise ValueError("zero variance in correlation input")
    return float((pc * tc).sum() / denom)


def r_squared(pred, truth, mask=None) -> float:
    """Squared Pearson correlation (NOT 1 - SSE/SST; the squared-correlation
    convention matches common CV tooling and can differ substantially)."""
    r = pearson_r(pred, truth, mask)
    return r * r
