"""File formats: ASCII grids, sample CSVs, model JSON, report CSVs, PPM
heatmaps, and the key=value config format.

All writers go through an atomic temp-file + rename so a crashed run never
leaves a half-written artifact. Sample/report CSVs serialize floats with
``repr`` (shortest round-trip form); grids use a configurable significant-digit
format since they are bulk data.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .aoa import CalibrationTable, TrainingDIResult
from .forest import TrainedForest, forest_from_dict, forest_to_dict
from .grids import Grid, GridGeometry
from .predictor_space import ImportanceWeights
from .samples import SampleTable
from .validation import CVReport

__all__ = [
    "read_grid",
    "write_grid",
    "read_samples",
    "write_samples",
    "save_model",
    "load_model",
    "write_importance_csv",
    "read_weights_csv",
    "write_training_di_csv",
    "read_training_di_csv",
    "write_cv_report_csv",
    "write_calibration_csv",
    "write_calibration_summary_csv",
    "write_quantile_stats_csv",
    "export_heatmap",
    "read_config",
    "write_csv",
    "atomic_write_text",
    "atomic_write_bytes",
    "PALETTES",
    "MISSING_COLOR",
    "MASK_COLOR",
]


# ---------------------------------------------------------------------------
# atomic writes
# ---------------------------------------------------------------------------

def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# ASCII grids
# ---------------------------------------------------------------------------

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def read_grid(path) -> Grid:
    """Parse an ASCII grid: 5-6 header lines (case-insensitive keys, any
    order; NODATA_value optional) then nrows*ncols whitespace-separated
    values, row 0 first (top edge)."""
    path = Path(path)
    header = {}
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        lineno = 0
        in_header = True
        for line in fh:
            lineno += 1
            tokens = line.split()
            if not tokens:
                continue
            if in_header and tokens[0].lower() in _HEADER_KEYS:
                key = tokens[0].lower()
                if len(tokens) != 2:
                    raise ValueError(f"{path}:{lineno}: header line needs one value, got {line!r}")
                if key in header:
                    raise ValueError(f"{path}:{lineno}: duplicate header key {tokens[0]!r}")
                try:
                    header[key] = float(tokens[1])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: bad header value {tokens[1]!r}") from None
                continue
            in_header = False
            for tok in tokens:
                try:
                    values.append(float(tok))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: unparseable value {tok!r}") from None

    for key in ("ncols", "nrows"):
        if key not in header:
            raise ValueError(f"{path}: missing header key {key!r}")
    rows, cols = int(header["nrows"]), int(header["ncols"])
    if rows < 1 or cols < 1 or rows != header["nrows"] or cols != header["ncols"]:
        raise ValueError(f"{path}: bad grid dimensions {header['nrows']}x{header['ncols']}")
    if len(values) != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {len(values)}")

    geometry = GridGeometry(
        rows=rows,
        cols=cols,
        cell_size=header.get("cellsize", 1.0),
        xll=header.get("xllcorner", 0.0),
        yll=header.get("yllcorner", 0.0),
        nodata=header.get("nodata_value", -9999.0),
    )
    arr = np.asarray(values, dtype=np.float64).reshape(rows, cols)
    arr[arr == geometry.nodata] = np.nan
    return Grid(values=arr, geometry=geometry)


def write_grid(grid: Grid, path, digits: int = 6) -> None:
    """Write an ASCII grid with ``digits`` significant digits for cell values.

    Header floats and the nodata sentinel always use exact (shortest
    round-trip) form so geometry and missing cells survive any ``digits``
    setting."""
    g = grid.geometry
    if digits < 1:
        raise ValueError(f"digits must be >= 1, got {digits}")
    fmt = f"%.{digits}g"
    nodata_token = repr(float(g.nodata))
    out = io.StringIO()
    out.write(f"ncols {g.cols}\n")
    out.write(f"nrows {g.rows}\n")
    out.write(f"xllcorner {float(g.xll)!r}\n")
    out.write(f"yllcorner {float(g.yll)!r}\n")
    out.write(f"cellsize {float(g.cell_size)!r}\n")
    out.write(f"NODATA_value {nodata_token}\n")
    missing = grid.missing
    for r in range(g.rows):
        row = [
            nodata_token if missing[r, c] else fmt % grid.values[r, c]
            for c in range(g.cols)
        ]
        out.write(" ".join(row))
        out.write("\n")
    atomic_write_text(path, out.getvalue())


# ---------------------------------------------------------------------------
# sample CSVs
# ---------------------------------------------------------------------------

def _parse_float(token: str, path, row: int, col: str) -> float:
    try:
        v = float(token)
    except ValueError:
        raise ValueError(f"{path}: row {row}, column {col!r}: non-numeric value {token!r}") from None
    if not np.isfinite(v):
        raise ValueError(f"{path}: row {row}, column {col!r}: non-finite value {token!r}")
    return v


def _parse_int(token: str, path, row: int, col: str) -> int:
    v = _parse_float(token, path, row, col)
    if v != int(v):
        raise ValueError(f"{path}: row {row}, column {col!r}: expected an integer, got {token!r}")
    return int(v)


def read_samples(path, fold_col: str = "fold", cluster_col: str = "cluster") -> SampleTable:
    """Read a sample CSV: required columns x, y, response; every other column
    is a predictor except the optional fold/cluster columns."""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dup = sorted({h for h in header if header.count(h) > 1})
            raise ValueError(f"{path}: duplicate column name(s): {', '.join(dup)}")
        for required in ("x", "y", "response"):
            if required not in header:
                raise ValueError(f"{path}: missing required column {required!r}")
        special = {"x", "y", "response"}
        if fold_col in header:
            special.add(fold_col)
        if cluster_col in header:
            special.add(cluster_col)
        predictor_names = [h for h in header if h not in special]
        if not predictor_names:
            raise ValueError(f"{path}: no predictor columns")
        col_index = {h: i for i, h in enumerate(header)}

        records = []
        for rix, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise ValueError(
                    f"{path}: row {rix}: {len(rec)} fields, header has {len(header)}"
                )
            records.append(rec)
    if not records:
        raise ValueError(f"{path}: no data rows")

    def column(name, conv):
        i = col_index[name]
        return [conv(rec[i], path, rix + 2, name) for rix, rec in enumerate(records)]

    return SampleTable(
        x=np.asarray(column("x", _parse_float)),
        y=np.asarray(column("y", _parse_float)),
        predictors=np.column_stack([column(nm, _parse_float) for nm in predictor_names]),
        predictor_names=tuple(predictor_names),
        response=np.asarray(column("response", _parse_float)),
        fold=np.asarray(column(fold_col, _parse_int), dtype=np.int64) if fold_col in col_index else None,
        cluster=np.asarray(column(cluster_col, _parse_int), dtype=np.int64) if cluster_col in col_index else None,
    )


def write_samples(table: SampleTable, path) -> None:
    """Write a sample CSV (floats in shortest round-trip form)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    header = ["x", "y", "response", *table.predictor_names]
    if table.fold is not None:
        header.append("fold")
    if table.cluster is not None:
        header.append("cluster")
    writer.writerow(header)
    for i in range(len(table)):
        rec = [repr(float(table.x[i])), repr(float(table.y[i])), repr(float(table.response[i]))]
        rec.extend(repr(float(v)) for v in table.predictors[i])
        if table.fold is not None:
            rec.append(int(table.fold[i]))
        if table.cluster is not None:
            rec.append(int(table.cluster[i]))
        writer.writerow(rec)
    atomic_write_text(path, out.getvalue())


# ---------------------------------------------------------------------------
# model JSON
# ---------------------------------------------------------------------------

def save_model(forest: TrainedForest, path) -> None:
    atomic_write_text(path, json.dumps(forest_to_dict(forest)) + "\n")


def load_model(path) -> TrainedForest:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON: {exc}") from None
    try:
        return forest_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed model document: {exc}") from None


# ---------------------------------------------------------------------------
# report CSVs
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    """Missing values become empty cells; floats use repr."""
    if isinstance(v, float):
        if np.isnan(v):
            return ""
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    atomic_write_text(path, out.getvalue())


def write_importance_csv(weights: ImportanceWeights, path) -> None:
    write_csv(path, ["predictor", "weight"],
               [(n, float(w)) for n, w in zip(weights.names, weights.values)])


def read_weights_csv(path) -> ImportanceWeights:
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:2] != ["predictor", "weight"]:
            raise ValueError(f"{path}: expected header 'predictor,weight', got {header}")
        names, values = [], []
        for rix, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) < 2:
                raise ValueError(f"{path}: row {rix}: need predictor and weight")
            names.append(rec[0].strip())
            values.append(_parse_float(rec[1], path, rix, "weight"))
    if not names:
        raise ValueError(f"{path}: no weights")
    return ImportanceWeights(names=tuple(names), values=np.asarray(values))


def write_training_di_csv(result: TrainingDIResult, path) -> None:
    rows = [(i, int(result.folds.fold[i]), float(result.di[i])) for i in range(result.di.size)]
    write_csv(path, ["row", "fold", "di"], rows)


def read_training_di_csv(path):
    """Returns (di values, fold ids) from a training-DI CSV."""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        try:
            di_col = header.index("di")
            fold_col = header.index("fold")
        except ValueError:
            raise ValueError(f"{path}: expected columns 'fold' and 'di', got {header}") from None
        di, fold = [], []
        for rix, rec in enumerate(reader, start=2):
            if not rec:
                continue
            di.append(_parse_float(rec[di_col], path, rix, "di"))
            fold.append(_parse_int(rec[fold_col], path, rix, "fold"))
    if not di:
        raise ValueError(f"{path}: no training DI rows")
    return np.asarray(di), np.asarray(fold, dtype=np.int64)


def write_cv_report_csv(report: CVReport, path) -> None:
    """Per-fold rows then two summary rows; the fold label of the summary rows
    carries the fold strategy for auditability."""
    strategy = report.folds.strategy
    rows = [
        (f, int(report.fold_sizes[f]), float(report.fold_rmse[f]))
        for f in range(report.folds.k)
    ]
    n = int(report.fold_sizes.sum())
    rows.append((f"mean[{strategy}]", n, float(report.rmse_fold_mean)))
    rows.append((f"pooled[{strategy}]", n, float(report.rmse_pooled)))
    write_csv(path, ["fold", "n", "rmse"], rows)


def write_calibration_csv(table: CalibrationTable, path) -> None:
    rows = [
        (r.quantile, r.scenario_id, r.cv_rmse, r.rmspe_in, r.rmspe_out,
         r.diff, r.n_inside, r.n_outside)
        for r in table.rows
    ]
    write_csv(
        path,
        ["quantile", "scenario_id", "cv_rmse", "rmspe_in", "rmspe_out", "diff",
         "n_inside", "n_outside"],
        rows,
    )


def write_calibration_summary_csv(summaries, path) -> None:
    rows = [
        (s.quantile, s.n_scenarios, s.mean_diff, s.median_diff, s.q25_diff, s.q75_diff)
        for s in summaries
    ]
    write_csv(
        path,
        ["quantile", "n_scenarios", "mean_diff", "median_diff", "q25_diff", "q75_diff"],
        rows,
    )


def write_quantile_stats_csv(stats, path) -> None:
    """Per-quantile AOA statistics of a single scenario (CalibrationRow list)."""
    rows = [
        (r.quantile, r.threshold, r.cv_rmse, r.rmspe_in, r.rmspe_out, r.diff,
         r.n_inside, r.n_outside)
        for r in stats
    ]
    write_csv(
        path,
        ["quantile", "threshold", "cv_rmse", "rmspe_in", "rmspe_out", "diff",
         "n_inside", "n_outside"],
        rows,
    )


# ---------------------------------------------------------------------------
# heatmap export (PPM, no image dependencies)
# ---------------------------------------------------------------------------

# anchor colors, interpolated linearly in value order
PALETTES = {
    "viridis": ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)),
    "gray": ((0, 0, 0), (255, 255, 255)),
}
MISSING_COLOR = (200, 200, 200)
MASK_COLOR = (240, 80, 170)


def export_heatmap(grid: Grid, path, palette: str = "viridis", mask=None) -> None:
    """Render a grid to a binary PPM image.

    Values map linearly onto the palette over the finite value range; missing
    cells take MISSING_COLOR. ``mask`` (boolean, True = highlight) paints
    cells in MASK_COLOR regardless of value, e.g. outside-AOA areas.
    """
    if palette not in PALETTES:
        raise ValueError(f"unknown palette {palette!r}; have {sorted(PALETTES)}")
    anchors = np.asarray(PALETTES[palette], dtype=np.float64)
    vals = grid.values
    finite = np.isfinite(vals)
    if not finite.any():
        raise ValueError("cannot render an all-missing grid")
    lo = vals[finite].min()
    hi = vals[finite].max()
    span = hi - lo
    t = np.zeros_like(vals)
    if span > 0:
        t[finite] = (vals[finite] - lo) / span
    else:
        t[finite] = 0.5

    # piecewise-linear palette lookup
    pos = t * (len(anchors) - 1)
    i0 = np.clip(np.floor(pos).astype(int), 0, len(anchors) - 2)
    frac = (pos - i0)[..., None]
    rgb = anchors[i0] * (1 - frac) + anchors[i0 + 1] * frac
    img = np.where(finite[..., None], rgb, np.asarray(MISSING_COLOR, dtype=np.float64))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != vals.shape:
            raise ValueError("mask shape does not match grid")
        img[mask] = MASK_COLOR
    data = img.round().clip(0, 255).astype(np.uint8)

    header = f"P6\n{grid.geometry.cols} {grid.geometry.rows}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + data.tobytes())


# ---------------------------------------------------------------------------
# key = value config files
# ---------------------------------------------------------------------------

def read_config(path) -> dict:
    """Parse a 'key = value' config file; '#' starts a comment."""
    path = Path(path)
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key or not value:
                raise ValueError(f"{path}:{lineno}: empty key or value")
            if key in out:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value
    return out
