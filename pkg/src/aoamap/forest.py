"""Random Forest regression: bagged CART trees, mtry tuning, out-of-bag
permutation importance, prediction, and per-point ensemble spread.

Trees split on the best of ``mtry`` randomly chosen predictors by
sum-of-squared-error reduction. Split candidates are midpoints between
consecutive sorted distinct values; SSE ties prefer the lowest predictor
index, then the lowest split value. A node stops splitting below
2*min_node_size rows or at zero response variance. Everything is
deterministic given the seed, independent of thread count and backend.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .kernels.rng import MASK64
from .predictor_space import ImportanceWeights
from .samples import SampleTable

__all__ = [
    "ForestConfig",
    "TrainedForest",
    "MtryTuning",
    "train_forest",
    "predict",
    "predict_per_tree",
    "ensemble_sd",
    "permutation_importance",
    "tune_mtry",
    "forest_to_dict",
    "forest_from_dict",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    """Training knobs. ``mtry=None`` resolves to max(1, p//3) at fit time;
    ``bootstrap=False`` grows every tree on the full sample (test harness)."""

    n_trees: int = 500
    mtry: int = None
    min_node_size: int = 5
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_node_size < 1:
            raise ValueError(f"min_node_size must be >= 1, got {self.min_node_size}")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError(f"mtry must be >= 1, got {self.mtry}")

    def resolved(self, p: int) -> "ForestConfig":
        mtry = self.mtry if self.mtry is not None else max(1, p // 3)
        if mtry > p:
            raise ValueError(f"mtry={mtry} exceeds predictor count {p}")
        return replace(self, mtry=mtry)


@dataclass(frozen=True)
class MtryTuning:
    """Grid-search record: one CV RMSE (fold-mean) per candidate mtry."""

    mtry_grid: tuple
    cv_rmse: np.ndarray
    best_mtry: int

    def __post_init__(self):
        object.__setattr__(self, "cv_rmse", np.asarray(self.cv_rmse, dtype=np.float64))
        if self.cv_rmse.shape != (len(self.mtry_grid),):
            raise ValueError("one RMSE per grid value required")


@dataclass
class TrainedForest:
    """Immutable-after-training forest stored as padded per-tree node arrays.

    Node 0 is each tree's root; ``features[t, i] < 0`` marks a leaf whose
    prediction is ``values[t, i]``. ``boot_counts[t, r]`` is how many times
    training row r entered tree t's bootstrap sample (0 means out-of-bag).
    """

    predictor_names: tuple
    config: ForestConfig
    n_rows: int
    features: np.ndarray
    thresholds: np.ndarray
    lefts: np.ndarray
    rights: np.ndarray
    values: np.ndarray
    n_nodes: np.ndarray
    boot_counts: np.ndarray
    tuning: MtryTuning = None
    importance: ImportanceWeights = None

    def __post_init__(self):
        t = self.config.n_trees
        if self.features.shape[0] != t or self.boot_counts.shape != (t, self.n_rows):
            raise ValueError("tree arrays do not match the config")
        if self.config.mtry is None:
            raise ValueError("config must carry the resolved mtry")

    @property
    def n_trees(self) -> int:
        return self.config.n_trees

    @property
    def n_predictors(self) -> int:
        return len(self.predictor_names)

    def oob_rows(self, t: int) -> np.ndarray:
        return np.nonzero(self.boot_counts[t] == 0)[0]


def _points_matrix(points, names) -> np.ndarray:
    if isinstance(points, SampleTable):
        mat = points.matrix(names)
    else:
        mat = np.asarray(points, dtype=np.float64)
        if mat.ndim == 1:
            mat = mat.reshape(1, -1)
        if mat.ndim != 2 or mat.shape[1] != len(names):
            raise ValueError(
                f"point matrix has {mat.shape[-1]} columns, model expects {len(names)}"
            )
    if np.isinf(mat).any():
        raise ValueError("non-finite (infinite) predictor value")
    return mat


def train_forest(samples: SampleTable, config: ForestConfig = ForestConfig()) -> TrainedForest:
    """Fit a bagged regression forest on the table's predictors/response."""
    x = np.ascontiguousarray(samples.predictors)
    y = np.ascontiguousarray(samples.response)
    n, p = x.shape
    if n < max(2, config.min_node_size):
        raise ValueError(f"need at least {max(2, config.min_node_size)} rows, got {n}")
    if p < 1:
        raise ValueError("need at least one predictor")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("training data contain missing or non-finite values")
    cfg = config.resolved(p)
    if np.ptp(y) == 0:
        warnings.warn("constant response; every tree is a single leaf", UserWarning, stacklevel=2)

    features, thresholds, lefts, rights, values, n_nodes, boot_counts = kernels.grow_forest(
        x, y, cfg.n_trees, cfg.mtry, cfg.min_node_size, 1 if cfg.bootstrap else 0, cfg.seed & MASK64
    )
    return TrainedForest(
        predictor_names=samples.predictor_names,
        config=cfg,
        n_rows=n,
        features=features,
        thresholds=thresholds,
        lefts=lefts,
        rights=rights,
        values=values,
        n_nodes=n_nodes,
        boot_counts=boot_counts,
    )


def predict_per_tree(forest: TrainedForest, points) -> np.ndarray:
    """Per-tree predictions, shape (n_trees, n_points); rows of ``points``
    containing NaN yield NaN columns."""
    mat = _points_matrix(points, forest.predictor_names)
    out = np.full((forest.n_trees, mat.shape[0]), np.nan)
    finite = np.isfinite(mat).all(axis=1)
    if finite.any():
        out[:, finite] = kernels.predict_trees(
            forest.features,
            forest.thresholds,
            forest.lefts,
            forest.rights,
            forest.values,
            np.ascontiguousarray(mat[finite]),
        )
    return out


def predict(forest: TrainedForest, points) -> np.ndarray:
    """Ensemble prediction: arithmetic mean over the per-tree predictions."""
    return predict_per_tree(forest, points).mean(axis=0)


def ensemble_sd(forest: TrainedForest, points) -> np.ndarray:
    """Per-point sample standard deviation (divisor n_trees - 1) of the
    individual tree predictions; a spread gauge, not a calibrated error."""
    if forest.n_trees < 2:
        raise ValueError("ensemble sd needs at least 2 trees")
    return predict_per_tree(forest, points).std(axis=0, ddof=1)


def permutation_importance(forest: TrainedForest, samples: SampleTable, seed: int = 0) -> ImportanceWeights:
    """Mean out-of-bag MSE increase per predictor, permuted within each
    tree's OOB rows.

    The raw mean increase is kept (not divided by its standard error);
    negative estimates are clamped to zero for use as distance weights, with
    the raw values preserved. Trees without OOB rows are skipped with a
    warning.
    """
    x = np.ascontiguousarray(samples.matrix(forest.predictor_names))
    y = np.ascontiguousarray(samples.response)
    if x.shape[0] != forest.n_rows:
        raise ValueError("samples do not match the training table the forest was grown on")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("samples contain missing or non-finite values")
    mse_base, mse_perm, oob_sizes = kernels.oob_permutation_mse(
        forest.features,
        forest.thresholds,
        forest.lefts,
        forest.rights,
        forest.values,
        forest.boot_counts,
        x,
        y,
        seed & MASK64,
    )
    skipped = int((oob_sizes == 0).sum())
    if skipped == forest.n_trees:
        raise ValueError("no tree has out-of-bag rows; cannot estimate importance")
    if skipped:
        warnings.warn(
            f"{skipped} tree(s) without out-of-bag rows skipped in importance",
            UserWarning,
            stacklevel=2,
        )
    keep = oob_sizes > 0
    increase = (mse_perm[keep] - mse_base[keep, None]).mean(axis=0)
    return ImportanceWeights.from_raw(forest.predictor_names, increase)


def tune_mtry(samples: SampleTable, mtry_grid, folds, config: ForestConfig = ForestConfig()) -> MtryTuning:
    """Cross-validated grid search over mtry; RMSE ties go to the smaller
    value. The winning mtry is meant to be reused for the final fit."""
    from .validation import cross_validate

    grid = tuple(int(m) for m in mtry_grid)
    p = samples.n_predictors
    if len(grid) == 0:
        raise ValueError("empty mtry grid")
    if len(set(grid)) != len(grid):
        raise ValueError("duplicate mtry grid values")
    for m in grid:
        if not (1 <= m <= p):
            raise ValueError(f"mtry={m} outside [1, {p}]")

    rmses = np.empty(len(grid))
    best_mtry = None
    best_rmse = np.inf
    for i, m in enumerate(grid):
        report = cross_validate(samples, folds, replace(config, mtry=m))
        rmses[i] = report.cv_rmse
        if rmses[i] < best_rmse or (rmses[i] == best_rmse and m < best_mtry):
            best_rmse = rmses[i]
            best_mtry = m
    return MtryTuning(mtry_grid=grid, cv_rmse=rmses, best_mtry=best_mtry)


# ---------------------------------------------------------------------------
# serialization (versioned, lossless: floats round-trip via repr)
# ---------------------------------------------------------------------------

def forest_to_dict(forest: TrainedForest) -> dict:
    """JSON-ready dict; per-tree arrays are truncated to their node counts."""
    trees = []
    for t in range(forest.n_trees):
        k = int(forest.n_nodes[t])
        trees.append(
            {
                "features": forest.features[t, :k].tolist(),
                "thresholds": forest.thresholds[t, :k].tolist(),
                "lefts": forest.lefts[t, :k].tolist(),
                "rights": forest.rights[t, :k].tolist(),
                "values": forest.values[t, :k].tolist(),
            }
        )
    out = {
        "schema_version": SCHEMA_VERSION,
        "kind": "regression_forest",
        "predictor_names": list(forest.predictor_names),
        "config": {
            "n_trees": forest.config.n_trees,
            "mtry": forest.config.mtry,
            "min_node_size": forest.config.min_node_size,
            "bootstrap": forest.config.bootstrap,
            "seed": forest.config.seed,
        },
        "n_rows": forest.n_rows,
        "trees": trees,
        "boot_counts": forest.boot_counts.tolist(),
        "tuning": None,
        "importance": None,
    }
    if forest.tuning is not None:
        out["tuning"] = {
            "mtry_grid": list(forest.tuning.mtry_grid),
            "cv_rmse": forest.tuning.cv_rmse.tolist(),
            "best_mtry": forest.tuning.best_mtry,
        }
    if forest.importance is not None:
        out["importance"] = {
            "names": list(forest.importance.names),
            "values": forest.importance.values.tolist(),
            "raw": forest.importance.raw.tolist(),
        }
    return out


def forest_from_dict(doc: dict) -> TrainedForest:
    """Rebuild a forest saved by :func:`forest_to_dict`."""
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema version {version!r}")
    if doc.get("kind") != "regression_forest":
        raise ValueError(f"not a regression forest document: kind={doc.get('kind')!r}")
    cfg = ForestConfig(**doc["config"])
    n_rows = int(doc["n_rows"])
    n_trees = cfg.n_trees
    trees = doc["trees"]
    if len(trees) != n_trees:
        raise ValueError(f"document has {len(trees)} trees, config says {n_trees}")
    max_nodes = 2 * n_rows + 1

    features = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    thresholds = np.zeros((n_trees, max_nodes), dtype=np.float64)
    lefts = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    rights = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    values = np.zeros((n_trees, max_nodes), dtype=np.float64)
    n_nodes = np.zeros(n_trees, dtype=np.int64)
    for t, tree in enumerate(trees):
        k = len(tree["features"])
        n_nodes[t] = k
        features[t, :k] = tree["features"]
        thresholds[t, :k] = tree["thresholds"]
        lefts[t, :k] = tree["lefts"]
        rights[t, :k] = tree["rights"]
        values[t, :k] = tree["values"]

    tuning = None
    if doc.get("tuning"):
        d = doc["tuning"]
        tuning = MtryTuning(
            mtry_grid=tuple(d["mtry_grid"]), cv_rmse=d["cv_rmse"], best_mtry=int(d["best_mtry"])
        )
    importance = None
    if doc.get("importance"):
        d = doc["importance"]
        importance = ImportanceWeights(
            names=tuple(d["names"]),
            values=np.asarray(d["values"], dtype=np.float64),
            raw=np.asarray(d["raw"], dtype=np.float64),
        )
    return TrainedForest(
        predictor_names=tuple(doc["predictor_names"]),
        config=cfg,
        n_rows=n_rows,
        features=features,
        thresholds=thresholds,
        lefts=lefts,
        rights=rights,
        values=values,
        n_nodes=n_nodes,
        boot_counts=np.asarray(doc["boot_counts"], dtype=np.int32),
        tuning=tuning,
        importance=importance,
    )
