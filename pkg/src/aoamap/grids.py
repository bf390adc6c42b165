"""Grid containers: geometry, single grids, and co-registered predictor stacks.

Grids are stored row-major with row 0 at the top (northernmost) edge, matching
the on-disk ASCII convention. Missing cells are NaN in memory; the nodata
sentinel only exists in files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np


@dataclass(frozen=True)
class GridGeometry:
    """Shape, cell size, and lower-left origin of a raster grid."""

    rows: int
    cols: int
    cell_size: float = 1.0
    xll: float = 0.0
    yll: float = 0.0
    nodata: float = -9999.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"degenerate grid geometry: {self.rows}x{self.cols}")
        if self.cell_size <= 0:
            raise ValueError(f"cell size must be positive, got {self.cell_size}")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def same_shape(self, other: "GridGeometry") -> bool:
        """Compatible for cell-wise operations (ignores the nodata sentinel)."""
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and np.isclose(self.cell_size, other.cell_size)
            and np.isclose(self.xll, other.xll)
            and np.isclose(self.yll, other.yll)
        )

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        """(x, y) coordinates of a cell center; row 0 is the top row."""
        x = self.xll + (col + 0.5) * self.cell_size
        y = self.yll + (self.rows - row - 0.5) * self.cell_size
        return x, y

    def cell_centers(self, rows: np.ndarray, cols: np.ndarray):
        x = self.xll + (np.asarray(cols) + 0.5) * self.cell_size
        y = self.yll + (self.rows - np.asarray(rows) - 0.5) * self.cell_size
        return x, y


@dataclass
class Grid:
    """A single 2-D value grid. NaN marks missing cells."""

    values: np.ndarray
    geometry: GridGeometry

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"grid values must be 2-D, got shape {self.values.shape}")
        if self.values.shape != (self.geometry.rows, self.geometry.cols):
            raise ValueError(
                f"grid shape {self.values.shape} does not match geometry "
                f"{(self.geometry.rows, self.geometry.cols)}"
            )

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def finite_values(self) -> np.ndarray:
        return self.values[~self.missing]

    def copy(self) -> "Grid":
        return Grid(self.values.copy(), self.geometry)


# A DI surface is just a grid of nonnegative (or missing) values.
DIGrid = Grid


def check_di_grid(grid: Grid) -> Grid:
    """Validate DI invariants: every non-missing value is >= 0."""
    vals = grid.finite_values
    if vals.size and vals.min() < 0:
        raise ValueError("DI grid contains negative values")
    return grid


class PredictorStack:
    """Named collection of co-registered predictor grids with a shared missing mask.

    The mask is the union of missing cells across all member grids; every grid
    is masked to NaN wherever any member is missing.
    """

    def __init__(self, grids: Mapping[str, np.ndarray] | Mapping[str, Grid], geometry: GridGeometry | None = None):
        if not grids:
            raise ValueError("predictor stack needs at least one grid")
        names = list(grids.keys())
        if len(set(names)) != len(names):
            raise ValueError("duplicate predictor names in stack")

        arrays = []
        for name, g in grids.items():
            if isinstance(g, Grid):
                if geometry is None:
                    geometry = g.geometry
                elif not geometry.same_shape(g.geometry):
                    raise ValueError(f"predictor grid {name!r} geometry differs from the stack")
                arrays.append(np.asarray(g.values, dtype=np.float64))
            else:
                arrays.append(np.asarray(g, dtype=np.float64))
        if geometry is None:
            a0 = arrays[0]
            geometry = GridGeometry(rows=a0.shape[0], cols=a0.shape[1])
        for name, a in zip(names, arrays):
            if a.shape != (geometry.rows, geometry.cols):
                raise ValueError(
                    f"predictor grid {name!r} has shape {a.shape}, expected "
                    f"{(geometry.rows, geometry.cols)}"
                )

        data = np.stack(arrays, axis=0)
        mask = np.isnan(data).any(axis=0)
        data[:, mask] = np.nan

        self.names: tuple[str, ...] = tuple(names)
        self.data: np.ndarray = data  # (p, rows, cols)
        self.mask: np.ndarray = mask  # True where missing
        self.geometry: GridGeometry = geometry

    @property
    def n_predictors(self) -> int:
        return len(self.names)

    def grid(self, name: str) -> Grid:
        try:
            i = self.names.index(name)
        except ValueError:
            raise KeyError(f"predictor {name!r} not in stack {self.names}") from None
        return Grid(self.data[i].copy(), self.geometry)

    def cell_matrix(self, names: Iterable[str] | None = None) -> np.ndarray:
        """All cells as an (n_cells, p) matrix in row-major order; missing cells are NaN rows."""
        names = tuple(names) if names is not None else self.names
        idx = []
        for name in names:
            try:
                idx.append(self.names.index(name))
            except ValueError:
                raise KeyError(f"predictor {name!r} not in stack {self.names}") from None
        return self.data[idx].reshape(len(idx), -1).T.copy()

    def values_at(self, rows: np.ndarray, cols: np.ndarray, names: Iterable[str] | None = None) -> np.ndarray:
        """Predictor values at the given cells, as an (n, p) matrix."""
        names = tuple(names) if names is not None else self.names
        out = np.empty((len(np.atleast_1d(rows)), len(names)))
        for j, name in enumerate(names):
            i = self.names.index(name)
            out[:, j] = self.data[i][rows, cols]
        return out
