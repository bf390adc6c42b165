"""Standardized, importance-weighted predictor space and the Dissimilarity
Index (DI).

Pipeline: center/scale each predictor by its training mean and sample standard
deviation, multiply each scaled column by a nonnegative importance weight, and
measure Euclidean distances in the resulting space. A point's DI is its
distance to the nearest (eligible) training point divided by the mean distance
over all unordered training pairs, so DI is unitless, zero at training points,
and invariant to rescaling all weights by a common factor.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grids import Grid, PredictorStack
from .samples import SampleTable

__all__ = [
    "StandardizationParams",
    "ImportanceWeights",
    "WeightedPointSet",
    "fit_standardizer",
    "standardize",
    "apply_weights",
    "weighted_points",
    "pairwise_mean_distance",
    "nearest_training_distance",
    "dissimilarity_index",
    "di_grid",
]


@dataclass(frozen=True)
class StandardizationParams:
    """Training means and sample standard deviations for the retained
    predictors, plus the names dropped for having zero variance."""

    names: tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray
    dropped: tuple[str, ...] = ()

    def __post_init__(self):
        means = np.ascontiguousarray(np.asarray(self.means, dtype=np.float64))
        sds = np.ascontiguousarray(np.asarray(self.sds, dtype=np.float64))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sds", sds)
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate predictor names")
        if means.shape != (len(self.names),) or sds.shape != (len(self.names),):
            raise ValueError("means/sds must align with names")
        if not (np.isfinite(means).all() and np.isfinite(sds).all()):
            raise ValueError("non-finite standardization parameters")
        if (sds <= 0).any():
            raise ValueError("retained predictors must have sd > 0")
        if set(self.dropped) & set(self.names):
            raise ValueError("dropped names overlap retained names")

    @property
    def n_predictors(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class ImportanceWeights:
    """Nonnegative per-predictor weights; `raw` keeps the pre-clamp values."""

    names: tuple[str, ...]
    values: np.ndarray
    raw: np.ndarray = None

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "values", values)
        raw = self.raw if self.raw is not None else values
        object.__setattr__(self, "raw", np.asarray(raw, dtype=np.float64))
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate predictor names")
        if values.shape != (len(self.names),):
            raise ValueError("weights must align with names")
        if not np.isfinite(values).all():
            raise ValueError("non-finite weight")
        if (values < 0).any():
            raise ValueError("negative weight; clamp via ImportanceWeights.from_raw")
        if not (values > 0).any():
            raise ValueError("all weights are zero")

    @classmethod
    def from_raw(cls, names, raw) -> "ImportanceWeights":
        """Build weights from raw importance estimates, clamping negatives to 0.

        Permutation importance can come out negative for uninformative
        predictors; a negative weight has no distance meaning, so such values
        are clamped with a warning. All-nonpositive estimates are an error.
        """
        raw = np.asarray(raw, dtype=np.float64)
        if not np.isfinite(raw).all():
            raise ValueError("non-finite importance estimate")
        clamped = np.maximum(raw, 0.0)
        if not (clamped > 0).any():
            raise ValueError("no positive importance estimate; cannot weight predictors")
        n_neg = int((raw < 0).sum())
        if n_neg:
            warnings.warn(
                f"clamped {n_neg} negative importance estimate(s) to 0",
                UserWarning,
                stacklevel=2,
            )
        return cls(names=tuple(names), values=clamped, raw=raw)

    @classmethod
    def uniform(cls, names, value: float = 1.0) -> "ImportanceWeights":
        names = tuple(names)
        return cls(names=names, values=np.full(len(names), float(value)))

    def aligned_to(self, names) -> "ImportanceWeights":
        """Subset and reorder to the given names (e.g. after dropping
        zero-variance predictors)."""
        names = tuple(names)
        lookup = {n: i for i, n in enumerate(self.names)}
        try:
            sel = [lookup[n] for n in names]
        except KeyError as exc:
            raise KeyError(f"no weight for predictor {exc.args[0]!r}") from None
        return ImportanceWeights(names=names, values=self.values[sel], raw=self.raw[sel])


@dataclass(frozen=True)
class WeightedPointSet:
    """Points already mapped into the weighted standardized space, with an
    optional per-point fold id for exclusion queries."""

    points: np.ndarray
    fold: np.ndarray = field(default=None)

    def __post_init__(self):
        points = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        object.__setattr__(self, "points", points)
        if points.ndim != 2:
            raise ValueError("points must be a 2-D matrix")
        if not np.isfinite(points).all():
            raise ValueError("weighted point set must be free of missing values")
        if self.fold is not None:
            fold = np.ascontiguousarray(np.asarray(self.fold, dtype=np.int64))
            object.__setattr__(self, "fold", fold)
            if fold.shape != (points.shape[0],):
                raise ValueError("fold ids must align with points")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n_dims(self) -> int:
        return self.points.shape[1]


def _as_matrix(points, names) -> np.ndarray:
    """Coerce a SampleTable or array to an (n, len(names)) float64 matrix."""
    if isinstance(points, SampleTable):
        return points.matrix(names)
    mat = np.asarray(points, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat.reshape(1, -1)
    if mat.ndim != 2 or mat.shape[1] != len(names):
        raise ValueError(
            f"expected a matrix with {len(names)} columns, got shape {mat.shape}"
        )
    return mat


def fit_standardizer(training, predictor_names=None) -> StandardizationParams:
    """Fit per-predictor mean and sample sd (divisor n-1) on training rows.

    Zero-variance predictors carry no dissimilarity information and are moved
    to the dropped list with a warning. Training rows must be complete.
    """
    if isinstance(training, SampleTable):
        names = tuple(predictor_names) if predictor_names is not None else training.predictor_names
        mat = training.matrix(names)
    else:
        if predictor_names is None:
            raise ValueError("predictor_names is required for matrix input")
        names = tuple(predictor_names)
        mat = _as_matrix(training, names)
    if mat.shape[0] < 2:
        raise ValueError(f"need at least 2 training rows, got {mat.shape[0]}")
    if not np.isfinite(mat).all():
        raise ValueError("training predictors contain missing or non-finite values")

    means = mat.mean(axis=0)
    sds = mat.std(axis=0, ddof=1)
    keep = sds > 0
    if not keep.any():
        raise ValueError("all predictors have zero variance")
    dropped = tuple(n for n, k in zip(names, keep) if not k)
    if dropped:
        warnings.warn(
            f"dropped zero-variance predictor(s): {', '.join(dropped)}",
            UserWarning,
            stacklevel=2,
        )
    kept_names = tuple(n for n, k in zip(names, keep) if k)
    return StandardizationParams(
        names=kept_names, means=means[keep], sds=sds[keep], dropped=dropped
    )


def standardize(points, params: StandardizationParams) -> np.ndarray:
    """Center and scale points by the TRAINING means/sds (never refit).

    Accepts a SampleTable or a matrix aligned to ``params.names``. NaN marks a
    missing query value and propagates; infinities are an error.
    """
    mat = _as_matrix(points, params.names)
    if np.isinf(mat).any():
        raise ValueError("non-finite (infinite) predictor value")
    return (mat - params.means) / params.sds


def apply_weights(scaled: np.ndarray, weights: ImportanceWeights, fold=None) -> WeightedPointSet:
    """Multiply scaled columns by their weights. Zero-weight columns stay in
    the matrix; they simply contribute nothing to any distance."""
    scaled = np.asarray(scaled, dtype=np.float64)
    if scaled.ndim != 2 or scaled.shape[1] != len(weights.names):
        raise ValueError(
            f"scaled matrix has {scaled.shape[-1]} columns, weights have {len(weights.names)}"
        )
    return WeightedPointSet(points=scaled * weights.values, fold=fold)


def weighted_points(points, params: StandardizationParams, weights: ImportanceWeights, fold=None) -> WeightedPointSet:
    """standardize + apply_weights in one step; weights may cover a superset
    of the retained predictors."""
    return apply_weights(standardize(points, params), weights.aligned_to(params.names), fold=fold)


def _points_of(training) -> np.ndarray:
    return training.points if isinstance(training, WeightedPointSet) else np.asarray(training, dtype=np.float64)


def pairwise_mean_distance(training) -> float:
    """Mean Euclidean distance over all n(n-1)/2 unordered training pairs."""
    pts = _points_of(training)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least 2 training points")
    if not np.isfinite(pts).all():
        raise ValueError("training points contain missing values")
    d_bar = float(kernels.pairwise_mean_distance(np.ascontiguousarray(pts)))
    if d_bar <= 0.0:
        raise ValueError("all training points identical; mean pairwise distance is 0")
    return d_bar


def _query_fold_array(n_queries: int, excluded_fold) -> np.ndarray:
    if excluded_fold is None:
        return np.full(n_queries, -1, dtype=np.int64)
    arr = np.asarray(excluded_fold, dtype=np.int64)
    if arr.ndim == 0:
        return np.full(n_queries, int(arr), dtype=np.int64)
    if arr.shape != (n_queries,):
        raise ValueError("per-query fold ids must align with queries")
    return np.ascontiguousarray(arr)


def nearest_training_distance(queries, training: WeightedPointSet, excluded_fold=None) -> np.ndarray:
    """Distance from each query to its nearest eligible training point.

    ``excluded_fold`` may be a single fold id (applied to every query) or a
    per-query array; id -1 disables exclusion for that query. Exact brute
    force; raising if the exclusion leaves a query with no training points.
    """
    q = _points_of(queries)
    if q.ndim == 1:
        q = q.reshape(1, -1)
    if q.shape[1] != training.n_dims:
        raise ValueError(f"queries have {q.shape[1]} dims, training has {training.n_dims}")
    if len(training) == 0:
        raise ValueError("empty training set")
    if not np.isfinite(q).all():
        raise ValueError("queries contain missing values")
    q = np.ascontiguousarray(q)
    train = np.ascontiguousarray(training.points)

    qf = _query_fold_array(q.shape[0], excluded_fold)
    if (qf >= 0).any():
        if training.fold is None:
            raise ValueError("fold exclusion requested but training set has no fold ids")
        out = kernels.min_distances_excluding(q, train, training.fold, qf)
        if np.isinf(out).any():
            raise ValueError("fold exclusion removed every training point for some query")
        return out
    return kernels.min_distances(q, train)


def dissimilarity_index(
    queries,
    training,
    params: StandardizationParams,
    weights: ImportanceWeights,
    excluded_fold=None,
    d_bar: float = None,
) -> np.ndarray:
    """DI for arbitrary query points: nearest-training distance over the mean
    pairwise training distance, both in weighted standardized space.

    ``training`` is a SampleTable or raw matrix aligned to ``params.names``;
    rows of ``queries`` containing NaN yield NaN. The mean pairwise distance
    never applies fold exclusion; pass ``d_bar`` to reuse a precomputed value.
    """
    fold = training.fold if isinstance(training, SampleTable) else None
    train_w = weighted_points(training, params, weights, fold=fold)
    if d_bar is None:
        d_bar = pairwise_mean_distance(train_w)

    qmat = _as_matrix(queries, params.names)
    scaled = standardize(qmat, params)
    wts = weights.aligned_to(params.names)
    out = np.full(qmat.shape[0], np.nan)
    finite = np.isfinite(qmat).all(axis=1)
    if finite.any():
        qw = scaled[finite] * wts.values
        qf = _query_fold_array(qmat.shape[0], excluded_fold)[finite]
        d_k = nearest_training_distance(qw, train_w, excluded_fold=qf)
        out[finite] = d_k / d_bar
    return out


def di_grid(
    stack: PredictorStack,
    training,
    params: StandardizationParams,
    weights: ImportanceWeights,
    d_bar: float = None,
) -> Grid:
    """DI evaluated at every non-missing cell of a predictor stack.

    Cells masked in any predictor grid stay nodata. Output geometry is the
    stack's geometry; values are independent of cell visitation order.
    """
    qmat = stack.cell_matrix(params.names)
    di = dissimilarity_index(qmat, training, params, weights, d_bar=d_bar)
    geom = stack.geometry
    return Grid(values=di.reshape(geom.rows, geom.cols), geometry=geom)
