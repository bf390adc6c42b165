"""Dissimilarity index (DI) and area of applicability (AOA) for predictive
spatial models.

The DI of a prediction location is its distance to the nearest training point
in standardized, importance-weighted predictor space, normalized by the mean
pairwise distance among training points. The AOA is the region whose DI stays
within a threshold calibrated on fold-aware training DI values, i.e. the area
where cross-validation error estimates can be taken at face value.

The package ships its own bagged regression forest (with permutation
importance), cross-validation utilities, a synthetic-landscape simulation
harness for threshold calibration experiments, file formats, and a CLI
(``aoamap``).
"""

from .aoa import (
    CALIBRATION_QUANTILES,
    DEFAULT_QUANTILE,
    AOAMask,
    CalibrationTable,
    TrainingDIResult,
    aoa_mask,
    calibrate_quantiles,
    di_threshold,
    training_di,
)
from .forest import (
    ForestConfig,
    TrainedForest,
    ensemble_sd,
    permutation_importance,
    predict,
    train_forest,
    tune_mtry,
)
from .grids import Grid, GridGeometry, PredictorStack
from .predictor_space import (
    ImportanceWeights,
    StandardizationParams,
    dissimilarity_index,
    di_grid,
    fit_standardizer,
)
from .samples import SampleTable
from .validation import (
    CVReport,
    FoldAssignment,
    assign_cluster_folds,
    assign_random_folds,
    cross_validate,
    folds_from_labels,
    pearson_r,
    r_squared,
    rmse,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AOAMask",
    "CALIBRATION_QUANTILES",
    "CVReport",
    "CalibrationTable",
    "DEFAULT_QUANTILE",
    "ForestConfig",
    "FoldAssignment",
    "Grid",
    "GridGeometry",
    "ImportanceWeights",
    "PredictorStack",
    "SampleTable",
    "StandardizationParams",
    "TrainedForest",
    "TrainingDIResult",
    "aoa_mask",
    "assign_cluster_folds",
    "assign_random_folds",
    "calibrate_quantiles",
    "cross_validate",
    "di_grid",
    "di_threshold",
    "dissimilarity_index",
    "ensemble_sd",
    "fit_standardizer",
    "folds_from_labels",
    "pearson_r",
    "permutation_importance",
    "predict",
    "r_squared",
    "rmse",
    "train_forest",
    "training_di",
    "tune_mtry",
]
