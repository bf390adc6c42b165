"""Area of Applicability: fold-aware training DI, quantile thresholds, AOA
masks, and the threshold-calibration sweep.

The threshold is an empirical quantile (default 0.95) of the DI observed on
the training points themselves, where each point's nearest-neighbor search
excludes its own cross-validation fold. A prediction cell belongs to the AOA
when its DI does not exceed the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Grid, GridGeometry
from .predictor_space import (
    ImportanceWeights,
    StandardizationParams,
    nearest_training_distance,
    pairwise_mean_distance,
    weighted_points,
)
from .samples import SampleTable
from .validation import FoldAssignment

__all__ = [
    "DEFAULT_QUANTILE",
    "CALIBRATION_QUANTILES",
    "TrainingDIResult",
    "AOAMask",
    "ScenarioErrors",
    "CalibrationRow",
    "CalibrationSummary",
    "CalibrationTable",
    "training_di",
    "di_threshold",
    "aoa_mask",
    "calibrate_quantiles",
]

DEFAULT_QUANTILE = 0.95
CALIBRATION_QUANTILES = (0.25, 0.50, 0.90, 0.95, 0.99, 1.0)


@dataclass(frozen=True)
class TrainingDIResult:
    """Per-training-point DI under fold exclusion, with the quantile→threshold
    table for the requested quantiles."""

    di: np.ndarray
    folds: FoldAssignment
    d_bar: float
    thresholds: dict

    def __post_init__(self):
        object.__setattr__(self, "di", np.asarray(self.di, dtype=np.float64))
        if self.di.ndim != 1 or self.di.size != len(self.folds):
            raise ValueError("one DI value per training point required")
        if (self.di < 0).any() or not np.isfinite(self.di).all():
            raise ValueError("training DI values must be finite and >= 0")
        qs = sorted(self.thresholds)
        thr = [self.thresholds[q] for q in qs]
        if any(b < a for a, b in zip(thr, thr[1:])):
            raise ValueError("thresholds must be nondecreasing in quantile")

    def threshold(self, quantile: float = DEFAULT_QUANTILE) -> float:
        if quantile in self.thresholds:
            return self.thresholds[quantile]
        return di_threshold(self.di, quantile)


def training_di(
    training: SampleTable,
    folds: FoldAssignment,
    params: StandardizationParams,
    weights: ImportanceWeights,
    quantiles=(DEFAULT_QUANTILE,),
) -> TrainingDIResult:
    """DI of every training point with its own fold excluded from the
    nearest-neighbor search.

    The normalizing mean pairwise distance uses ALL unordered training pairs;
    fold structure affects only the numerator. This mirrors how the held-out
    folds of a cross-validation see the training points, and its quantiles
    set the AOA threshold.
    """
    if len(folds) != len(training):
        raise ValueError("fold assignment does not match sample count")
    train_w = weighted_points(training, params, weights, fold=folds.fold)
    d_bar = pairwise_mean_distance(train_w)
    d_k = nearest_training_distance(train_w.points, train_w, excluded_fold=folds.fold)
    di = d_k / d_bar
    table = {float(q): di_threshold(di, q) for q in quantiles}
    return TrainingDIResult(di=di, folds=folds, d_bar=d_bar, thresholds=table)


def di_threshold(result, quantile: float = DEFAULT_QUANTILE) -> float:
    """Empirical quantile of the training DI, by linear interpolation between
    order statistics (position h = (n-1)q + 1); quantile 1.0 is the maximum.

    Accepts a TrainingDIResult or a bare array of DI values.
    """
    if not 0.0 < quantile <= 1.0:
        raise ValueError(f"quantile must be in (0, 1], got {quantile}")
    di = result.di if isinstance(result, TrainingDIResult) else np.asarray(result, dtype=np.float64)
    if di.size == 0:
        raise ValueError("no training DI values")
    if not np.isfinite(di).all():
        raise ValueError("training DI values must be finite")
    return float(np.quantile(di, quantile))


@dataclass(frozen=True)
class AOAMask:
    """Boolean AOA grid: ``inside`` where DI <= threshold, ``missing`` where
    DI is nodata; outside everywhere else."""

    inside: np.ndarray
    missing: np.ndarray
    geometry: GridGeometry
    threshold: float
    quantile: float = None

    def __post_init__(self):
        if self.inside.shape != self.missing.shape:
            raise ValueError("inside/missing shape mismatch")
        if self.inside.shape != (self.geometry.rows, self.geometry.cols):
            raise ValueError("mask shape does not match geometry")
        if (self.inside & self.missing).any():
            raise ValueError("a cell cannot be both inside and missing")

    @property
    def n_inside(self) -> int:
        return int(self.inside.sum())

    @property
    def n_missing(self) -> int:
        return int(self.missing.sum())

    @property
    def n_outside(self) -> int:
        return self.inside.size - self.n_inside - self.n_missing

    def to_grid(self) -> Grid:
        """1.0 inside, 0.0 outside, NaN missing; for file export."""
        vals = np.where(self.inside, 1.0, 0.0)
        vals[self.missing] = np.nan
        return Grid(values=vals, geometry=self.geometry)


def aoa_mask(di: Grid, threshold: float, quantile: float = None) -> AOAMask:
    """Threshold a DI grid into an AOA mask; DI equal to the threshold counts
    as inside ("does not exceed")."""
    if not np.isfinite(threshold) or threshold < 0:
        raise ValueError(f"threshold must be finite and >= 0, got {threshold}")
    missing = di.missing
    inside = np.zeros_like(missing)
    finite = ~missing
    inside[finite] = di.values[finite] <= threshold
    return AOAMask(
        inside=inside,
        missing=missing,
        geometry=di.geometry,
        threshold=float(threshold),
        quantile=quantile,
    )


# ---------------------------------------------------------------------------
# threshold calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioErrors:
    """One simulated scenario's ingredients for the calibration sweep:
    cross-validation RMSE, per-cell prediction error and DI (NaN = missing),
    and the fold-aware training DI that thresholds are drawn from."""

    scenario_id: str
    cv_rmse: float
    cell_error: np.ndarray
    cell_di: np.ndarray
    training_di: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cell_error", np.asarray(self.cell_error, dtype=np.float64).ravel())
        object.__setattr__(self, "cell_di", np.asarray(self.cell_di, dtype=np.float64).ravel())
        object.__setattr__(self, "training_di", np.asarray(self.training_di, dtype=np.float64).ravel())
        if self.cell_error.shape != self.cell_di.shape:
            raise ValueError("per-cell error and DI must align")
        if self.training_di.size == 0:
            raise ValueError("no training DI values")


@dataclass(frozen=True)
class CalibrationRow:
    quantile: float
    scenario_id: str
    threshold: float
    cv_rmse: float
    rmspe_in: float
    rmspe_out: float
    diff: float
    n_inside: int
    n_outside: int


@dataclass(frozen=True)
class CalibrationSummary:
    """Across scenarios at one quantile; NaN rows (empty AOA) excluded."""

    quantile: float
    n_scenarios: int
    mean_diff: float
    median_diff: float
    q25_diff: float
    q75_diff: float


@dataclass(frozen=True)
class CalibrationTable:
    rows: tuple
    summaries: tuple

    @property
    def best_quantile(self) -> float:
        """Quantile whose mean (cv_rmse - rmspe_inside) is closest to zero."""
        usable = [s for s in self.summaries if s.n_scenarios > 0]
        if not usable:
            raise ValueError("no scenario produced a nonempty AOA at any quantile")
        return min(usable, key=lambda s: abs(s.mean_diff)).quantile

    def summary_for(self, quantile: float) -> CalibrationSummary:
        for s in self.summaries:
            if s.quantile == quantile:
                return s
        raise KeyError(f"quantile {quantile} not in calibration table")


def _rmspe(err: np.ndarray) -> float:
    return float(np.sqrt(np.mean(err * err))) if err.size else float("nan")


def calibrate_quantiles(scenarios, quantiles=CALIBRATION_QUANTILES) -> CalibrationTable:
    """Sweep candidate threshold quantiles over simulated scenarios.

    For each scenario and quantile: threshold the scenario's cells by its own
    training-DI quantile, then compare the truth-based prediction error inside
    the AOA (RMSPE) with the model's cross-validation RMSE. A well-chosen
    quantile makes cv_rmse - rmspe_inside center on zero, meaning the CV error
    honestly describes performance exactly where the mask claims applicability.
    Scenarios whose AOA is empty at a quantile contribute a missing row there.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("no scenarios to calibrate on")
    quantiles = [float(q) for q in quantiles]
    rows = []
    summaries = []
    for q in quantiles:
        diffs = []
        for sc in scenarios:
            thr = di_threshold(sc.training_di, q)
            valid = np.isfinite(sc.cell_di) & np.isfinite(sc.cell_error)
            inside = valid & (sc.cell_di <= thr)
            outside = valid & ~inside
            rmspe_in = _rmspe(sc.cell_error[inside])
            rmspe_out = _rmspe(sc.cell_error[outside])
            diff = sc.cv_rmse - rmspe_in if np.isfinite(rmspe_in) else float("nan")
            if np.isfinite(diff):
                diffs.append(diff)
            rows.append(
                CalibrationRow(
                    quantile=q,
                    scenario_id=sc.scenario_id,
                    threshold=thr,
                    cv_rmse=sc.cv_rmse,
                    rmspe_in=rmspe_in,
                    rmspe_out=rmspe_out,
                    diff=diff,
                    n_inside=int(inside.sum()),
                    n_outside=int(outside.sum()),
                )
            )
        d = np.asarray(diffs)
        if d.size:
            summaries.append(
                CalibrationSummary(
                    quantile=q,
                    n_scenarios=int(d.size),
                    mean_diff=float(d.mean()),
                    median_diff=float(np.median(d)),
                    q25_diff=float(np.quantile(d, 0.25)),
                    q75_diff=float(np.quantile(d, 0.75)),
                )
            )
        else:
            nan = float("nan")
            summaries.append(
                CalibrationSummary(
                    quantile=q, n_scenarios=0, mean_diff=nan, median_diff=nan, q25_diff=nan, q75_diff=nan
                )
            )
    return CalibrationTable(rows=tuple(rows), summaries=tuple(summaries))
