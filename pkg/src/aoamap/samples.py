"""Point sample tables: coordinates, predictor matrix, response, optional fold/cluster ids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

RESERVED_COLUMNS = ("x", "y", "response", "fold", "cluster")


@dataclass
class SampleTable:
    """Rows of point records used for training and validation.

    ``predictors`` is an (n, p) float matrix whose columns follow
    ``predictor_names``. ``fold`` and ``cluster`` are optional integer labels
    per row.
    """

    x: np.ndarray
    y: np.ndarray
    predictors: np.ndarray
    predictor_names: tuple[str, ...]
    response: np.ndarray
    fold: np.ndarray | None = None
    cluster: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.predictors = np.asarray(self.predictors, dtype=np.float64)
        self.response = np.asarray(self.response, dtype=np.float64)
        self.predictor_names = tuple(self.predictor_names)
        n = len(self.x)
        if self.predictors.ndim != 2:
            raise ValueError("predictor matrix must be 2-D")
        if self.predictors.shape[0] != n or len(self.y) != n or len(self.response) != n:
            raise ValueError("sample table columns have inconsistent lengths")
        if self.predictors.shape[1] != len(self.predictor_names):
            raise ValueError(
                f"{self.predictors.shape[1]} predictor columns but "
                f"{len(self.predictor_names)} names"
            )
        if len(set(self.predictor_names)) != len(self.predictor_names):
            raise ValueError("duplicate predictor names")
        for reserved in RESERVED_COLUMNS:
            if reserved in self.predictor_names:
                raise ValueError(f"predictor name {reserved!r} collides with a reserved column")
        if self.fold is not None:
            self.fold = np.asarray(self.fold, dtype=np.int64)
            if len(self.fold) != n:
                raise ValueError("fold column length mismatch")
        if self.cluster is not None:
            self.cluster = np.asarray(self.cluster, dtype=np.int64)
            if len(self.cluster) != n:
                raise ValueError("cluster column length mismatch")

    @classmethod
    def from_arrays(
        cls,
        predictors: np.ndarray,
        response: np.ndarray,
        predictor_names: Sequence[str] | None = None,
        x: np.ndarray | None = None,
        y: np.ndarray | None = None,
        fold: Sequence[int] | None = None,
        cluster: Sequence[int] | None = None,
    ) -> "SampleTable":
        """Build a table from bare arrays; coordinates default to the row
        index and names to p1..pP."""
        predictors = np.asarray(predictors, dtype=np.float64)
        if predictors.ndim != 2:
            raise ValueError("predictor matrix must be 2-D")
        n, p = predictors.shape
        if predictor_names is None:
            predictor_names = tuple(f"p{j + 1}" for j in range(p))
        return cls(
            x=np.arange(n, dtype=np.float64) if x is None else x,
            y=np.zeros(n) if y is None else y,
            predictors=predictors,
            predictor_names=tuple(predictor_names),
            response=response,
            fold=fold,
            cluster=cluster,
        )

    def __len__(self) -> int:
        return len(self.x)

    @property
    def n_predictors(self) -> int:
        return len(self.predictor_names)

    def matrix(self, names: Iterable[str] | None = None) -> np.ndarray:
        """Predictor submatrix for the given names (all predictors by default)."""
        if names is None:
            return self.predictors.copy()
        cols = []
        for name in names:
            try:
                cols.append(self.predictor_names.index(name))
            except ValueError:
                raise KeyError(f"predictor {name!r} not present in sample table") from None
        return self.predictors[:, cols].copy()

    def subset(self, rows: np.ndarray) -> "SampleTable":
        rows = np.asarray(rows)
        return SampleTable(
            x=self.x[rows],
            y=self.y[rows],
            predictors=self.predictors[rows],
            predictor_names=self.predictor_names,
            response=self.response[rows],
            fold=None if self.fold is None else self.fold[rows],
            cluster=None if self.cluster is None else self.cluster[rows],
        )

    def with_fold(self, fold: Sequence[int]) -> "SampleTable":
        return SampleTable(
            x=self.x,
            y=self.y,
            predictors=self.predictors,
            predictor_names=self.predictor_names,
            response=self.response,
            fold=np.asarray(fold, dtype=np.int64),
            cluster=self.cluster,
        )
