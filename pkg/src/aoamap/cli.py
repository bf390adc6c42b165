"""Command-line interface.

Subcommands cover the full workflow: ``train`` fits a forest and exports
importance + cross-validation reports, ``di``/``aoa`` compute dissimilarity
grids and applicability masks, ``calibrate``/``simulate`` drive the synthetic
catalogue, and ``metrics`` scores prediction grids.

Conventions: logs go to standard error, data to files or standard output.
Exit status is 0 on success, 1 on usage errors, 2 on data errors. ``--seed``
falls back to the AOA_SEED environment variable, then 0. Same flags + files +
seed give byte-identical outputs.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import aoa as aoa_mod
from . import fileio
from . import forest as forest_mod
from . import kernels
from . import predictor_space as ps
from . import simulation as sim
from . import validation as val
from .grids import PredictorStack
from .kernels.rng import stream_seed
from .samples import SampleTable
from .simulation import ScenarioError

__all__ = ["main", "build_parser"]

# sub-stream tags so one --seed drives independent random choices
_STREAM_IMPORTANCE = 1
_STREAM_FOLDS = 2
_STREAM_TUNING = 3


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; this tool reserves 2 for
    data errors, so usage problems are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _folds_spec(text: str):
    """Parse --folds values: random:k=N | cluster:col=NAME | file:col=NAME."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    rest = rest.strip()
    if kind == "random":
        m = re.fullmatch(r"k=(\d+)", rest)
        if m is None:
            raise argparse.ArgumentTypeError(f"expected random:k=N, got {text!r}")
        k = int(m.group(1))
        if k < 2:
            raise argparse.ArgumentTypeError("random fold count must be >= 2")
        return ("random", k)
    if kind in ("cluster", "file"):
        m = re.fullmatch(r"col=(\S+)", rest)
        if m is None:
            raise argparse.ArgumentTypeError(f"expected {kind}:col=NAME, got {text!r}")
        return (kind, m.group(1))
    raise argparse.ArgumentTypeError(
        f"unknown fold strategy {kind!r}; use random:k=N, cluster:col=NAME or file:col=NAME"
    )


def _int_list(text: str):
    try:
        values = tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty integer list")
    return values


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="random seed (default: AOA_SEED environment variable, then 0)")
    p.add_argument("--threads", type=int, default=None, metavar="N",
                   help="cap worker threads for grid and forest kernels")


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("AOA_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"AOA_SEED must be an integer, got {env!r}") from None
    return 0


def _read_samples_for(args) -> SampleTable:
    """Read the samples file, steering a custom --folds column away from the
    predictor set."""
    fold_col, cluster_col = "fold", "cluster"
    spec = getattr(args, "folds", None)
    if spec is not None:
        if spec[0] == "file":
            fold_col = spec[1]
        elif spec[0] == "cluster":
            cluster_col = spec[1]
    return fileio.read_samples(args.samples, fold_col=fold_col, cluster_col=cluster_col)


def _build_folds(samples: SampleTable, spec, seed: int, default_k: int = 10) -> val.FoldAssignment:
    """Resolve a fold assignment. Without an explicit --folds value the
    precedence is: fold column in the file, then cluster column, then random
    k-fold."""
    n = len(samples)
    if spec is None:
        if samples.fold is not None:
            return val.folds_from_labels(samples.fold)
        if samples.cluster is not None:
            return val.assign_cluster_folds(samples.cluster)
        return val.assign_random_folds(n, min(default_k, n), stream_seed(seed, _STREAM_FOLDS))
    kind = spec[0]
    if kind == "random":
        return val.assign_random_folds(n, spec[1], stream_seed(seed, _STREAM_FOLDS))
    if kind == "cluster":
        if samples.cluster is None:
            raise ValueError(f"samples file has no cluster column {spec[1]!r}")
        return val.assign_cluster_folds(samples.cluster)
    if samples.fold is None:
        raise ValueError(f"samples file has no fold column {spec[1]!r}")
    return val.folds_from_labels(samples.fold)


def _load_stack(grid_dir, names) -> PredictorStack:
    """Assemble a predictor stack from <grid_dir>/<name>.asc for each name."""
    grid_dir = Path(grid_dir)
    missing = [n for n in names if not (grid_dir / f"{n}.asc").exists()]
    if missing:
        raise ValueError(
            f"{grid_dir}: missing predictor grid(s): "
            + ", ".join(f"{n}.asc" for n in missing)
        )
    return PredictorStack(grids={n: fileio.read_grid(grid_dir / f"{n}.asc") for n in names})


def _echo(key, value) -> None:
    if isinstance(value, float):
        value = repr(value)
    print(f"{key}={value}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_train(args) -> int:
    seed = _resolve_seed(args)
    samples = _read_samples_for(args)
    folds = _build_folds(samples, args.folds, seed)
    _log(f"train: {len(samples)} samples, {samples.n_predictors} predictors, "
         f"folds={folds.strategy}:k={folds.k}")

    tuning = None
    mtry = args.mtry
    if args.mtry_grid is not None:
        tune_config = forest_mod.ForestConfig(
            n_trees=args.trees, min_node_size=args.min_node_size,
            seed=stream_seed(seed, _STREAM_TUNING),
        )
        tuning = forest_mod.tune_mtry(samples, args.mtry_grid, folds, tune_config)
        mtry = tuning.best_mtry
        _log(f"train: tuned mtry={mtry} over {args.mtry_grid}")

    config = forest_mod.ForestConfig(
        n_trees=args.trees, mtry=mtry, min_node_size=args.min_node_size, seed=seed,
    )
    model = forest_mod.train_forest(samples, config)
    model.tuning = tuning
    model.importance = forest_mod.permutation_importance(
        model, samples, seed=stream_seed(seed, _STREAM_IMPORTANCE))
    report = val.cross_validate(samples, folds, config)

    out = Path(args.out)
    importance_out = args.importance_out or out.with_suffix(".importance.csv")
    cv_out = args.cv_out or out.with_suffix(".cv.csv")
    fileio.save_model(model, out)
    fileio.write_importance_csv(model.importance, importance_out)
    fileio.write_cv_report_csv(report, cv_out)
    _log(f"train: wrote {out}, {importance_out}, {cv_out}")

    _echo("mtry", model.config.mtry)
    _echo("cv_rmse", report.cv_rmse)
    _echo("r_squared", report.r_squared)
    return 0


def _cmd_importance(args) -> int:
    seed = _resolve_seed(args)
    model = fileio.load_model(args.model)
    samples = fileio.read_samples(args.samples)
    weights = forest_mod.permutation_importance(
        model, samples, seed=stream_seed(seed, _STREAM_IMPORTANCE))
    fileio.write_importance_csv(weights, args.out)
    _log(f"importance: wrote {args.out}")
    return 0


def _cmd_cv(args) -> int:
    seed = _resolve_seed(args)
    samples = _read_samples_for(args)
    folds = _build_folds(samples, args.folds, seed)
    config = forest_mod.ForestConfig(
        n_trees=args.trees, mtry=args.mtry, min_node_size=args.min_node_size, seed=seed,
    )
    report = val.cross_validate(samples, folds, config)
    if args.out:
        fileio.write_cv_report_csv(report, args.out)
        _log(f"cv: wrote {args.out}")
    _echo("strategy", f"{folds.strategy}:k={folds.k}")
    _echo("cv_rmse", report.cv_rmse)
    _echo("rmse_pooled", report.rmse_pooled)
    _echo("r_squared", report.r_squared)
    return 0


def _resolve_weights(args, params: ps.StandardizationParams) -> ps.ImportanceWeights:
    if args.model:
        model = fileio.load_model(args.model)
        if model.importance is None:
            raise ValueError(
                f"{args.model}: model stores no importance weights; "
                "retrain, or pass --weights / --uniform-weights"
            )
        return model.importance
    if args.weights:
        return fileio.read_weights_csv(args.weights)
    return ps.ImportanceWeights.uniform(params.names)


def _cmd_di(args) -> int:
    seed = _resolve_seed(args)
    samples = _read_samples_for(args)
    params = ps.fit_standardizer(samples)
    weights = _resolve_weights(args, params)
    stack = _load_stack(args.grids, params.names)
    _log(f"di: {len(samples)} training points, {len(params.names)} predictors, "
         f"grid {stack.geometry.rows}x{stack.geometry.cols}")

    di = ps.di_grid(stack, samples, params, weights)
    fileio.write_grid(di, args.out, digits=args.digits)
    _log(f"di: wrote {args.out}")

    if args.train_di_out:
        folds = _build_folds(samples, args.folds, seed)
        result = aoa_mod.training_di(samples, folds, params, weights,
                                     quantiles=aoa_mod.CALIBRATION_QUANTILES)
        fileio.write_training_di_csv(result, args.train_di_out)
        _log(f"di: wrote {args.train_di_out} (folds={folds.strategy}:k={folds.k})")
    if args.image:
        fileio.export_heatmap(di, args.image, palette=args.palette)
        _log(f"di: wrote {args.image}")
    return 0


def _cmd_aoa(args) -> int:
    di = fileio.read_grid(args.di)
    if args.threshold is not None:
        threshold = args.threshold
        quantile = None
    else:
        if args.train_di is None:
            raise ValueError("aoa needs --train-di (training DI CSV) or an explicit --threshold")
        train_di, _ = fileio.read_training_di_csv(args.train_di)
        threshold = aoa_mod.di_threshold(train_di, args.quantile)
        quantile = args.quantile
    mask = aoa_mod.aoa_mask(di, threshold, quantile=quantile)
    fileio.write_grid(mask.to_grid(), args.out, digits=1)
    _log(f"aoa: wrote {args.out}")
    if args.image:
        outside = ~mask.inside & ~mask.missing
        fileio.export_heatmap(di, args.image, palette=args.palette, mask=outside)
        _log(f"aoa: wrote {args.image}")
    if quantile is not None:
        _echo("quantile", quantile)
    _echo("threshold", float(threshold))
    _echo("n_inside", mask.n_inside)
    _echo("n_outside", mask.n_outside)
    _echo("n_missing", mask.n_missing)
    return 0


def _cmd_metrics(args) -> int:
    pred = fileio.read_grid(args.pred)
    truth = fileio.read_grid(args.truth)
    if not pred.geometry.same_shape(truth.geometry):
        raise ValueError(
            f"geometry mismatch: {args.pred} is {pred.geometry.rows}x{pred.geometry.cols}, "
            f"{args.truth} is {truth.geometry.rows}x{truth.geometry.cols}"
        )
    select = np.isfinite(pred.values) & np.isfinite(truth.values)
    if args.mask:
        mask_grid = fileio.read_grid(args.mask)
        if not mask_grid.geometry.same_shape(pred.geometry):
            raise ValueError(f"geometry mismatch: mask {args.mask} does not match {args.pred}")
        inside = ~mask_grid.missing & (mask_grid.values >= 0.5)
        select &= ~inside if args.region == "outside" else inside
    elif args.region == "outside":
        raise ValueError("--region outside needs --mask")

    n = int(select.sum())
    if n == 0:
        raise ValueError("no cells to score (empty selection)")
    rows = [("region", args.region if args.mask else "all"), ("n", n)]
    rows.append(("rmse", val.rmse(pred.values, truth.values, mask=select.ravel())))
    if n >= 2:
        try:
            r = val.pearson_r(pred.values, truth.values, mask=select.ravel())
        except ValueError:
            r = float("nan")
        rows.append(("r", r))
        rows.append(("r_squared", r * r))
    for key, value in rows:
        _echo(key, value)
    if args.out:
        fileio.write_csv(args.out, ["metric", "value"], rows)
        _log(f"metrics: wrote {args.out}")
    return 0


def _progress(done, total, scenario_id, status):
    _log(f"[{done}/{total}] {scenario_id}: {status}")


def _run_config_catalogue(args):
    cfg = fileio.read_config(args.config)
    specs = sim.specs_from_config(cfg)
    _log(f"{args.config}: {len(specs)} scenarios")
    catalogue = sim.run_catalogue(specs, n_jobs=args.jobs, progress=_progress)
    for scenario_id, message in catalogue.failures:
        _log(f"FAILED {scenario_id}: {message}")
    quantiles = specs[0].quantiles
    return catalogue, quantiles


def _cmd_calibrate(args) -> int:
    catalogue, quantiles = _run_config_catalogue(args)
    table = aoa_mod.calibrate_quantiles(catalogue.errors(args.which), quantiles)
    fileio.write_calibration_csv(table, args.out)
    summary_out = args.summary_out or Path(args.out).with_suffix(".summary.csv")
    fileio.write_calibration_summary_csv(table.summaries, summary_out)
    _log(f"calibrate: wrote {args.out}, {summary_out}")
    for s in table.summaries:
        _echo(f"mean_diff[q={s.quantile:g}]", s.mean_diff)
    _echo("best_quantile", table.best_quantile)
    return 0


def _cmd_simulate(args) -> int:
    catalogue, quantiles = _run_config_catalogue(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    for result in catalogue.results:
        d = out_dir / result.spec.scenario_id
        d.mkdir(parents=True, exist_ok=True)
        fileio.write_grid(result.truth, d / "truth.asc")
        fileio.write_grid(result.prediction, d / "prediction.asc")
        fileio.write_grid(result.di, d / "di.asc")
        fileio.write_grid(result.di_uniform, d / "di_uniform.asc")
        fileio.write_samples(result.samples, d / "samples.csv")
        fileio.write_importance_csv(result.importance, d / "importance.csv")
        evals = [("", result.primary)]
        if result.contrast is not None:
            evals.append(("_random", result.contrast))
        for suffix, ev in evals:
            fileio.write_cv_report_csv(ev.cv, d / f"cv{suffix}.csv")
            fileio.write_training_di_csv(ev.train_di, d / f"training_di{suffix}.csv")
            fileio.write_quantile_stats_csv(ev.stats, d / f"quantile_stats{suffix}.csv")

    table = aoa_mod.calibrate_quantiles(catalogue.errors("primary"), quantiles)
    fileio.write_calibration_csv(table, out_dir / "calibration.csv")
    fileio.write_calibration_summary_csv(table.summaries, out_dir / "calibration_summary.csv")
    if catalogue.failures:
        lines = "".join(f"{sid}: {msg}\n" for sid, msg in catalogue.failures)
        fileio.atomic_write_text(out_dir / "failures.txt", lines)
    _log(f"simulate: wrote {len(catalogue.results)} scenario directories under {out_dir}")
    _echo("n_ok", len(catalogue.results))
    _echo("n_failed", len(catalogue.failures))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aoamap",
                     description="Dissimilarity index and area of applicability "
                                 "for predictive spatial models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit a forest; export model, importance and CV report")
    p.add_argument("--samples", required=True, help="training samples CSV")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--trees", type=int, default=500)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--mtry", type=int, default=None,
                   help="candidate predictors per split (default p/3)")
    g.add_argument("--mtry-grid", type=_int_list, default=None, metavar="A,B,...",
                   help="tune mtry by cross-validation over these values")
    p.add_argument("--min-node-size", type=int, default=5)
    p.add_argument("--folds", type=_folds_spec, default=None,
                   help="random:k=N | cluster:col=NAME | file:col=NAME "
                        "(default: fold column, else cluster column, else random:k=10)")
    p.add_argument("--importance-out", default=None, help="default: <out>.importance.csv")
    p.add_argument("--cv-out", default=None, help="default: <out>.cv.csv")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("importance", help="recompute permutation importance for a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True, help="importance CSV path")
    _add_common(p)
    p.set_defaults(func=_cmd_importance)

    p = sub.add_parser("cv", help="cross-validate a forest configuration")
    p.add_argument("--samples", required=True)
    p.add_argument("--trees", type=int, default=500)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--min-node-size", type=int, default=5)
    p.add_argument("--folds", type=_folds_spec, default=None)
    p.add_argument("--out", default=None, help="CV report CSV path")
    _add_common(p)
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("di", help="dissimilarity index grid from samples + predictor grids")
    p.add_argument("--samples", required=True)
    p.add_argument("--grids", required=True,
                   help="directory holding <predictor>.asc for every predictor")
    p.add_argument("--out", required=True, help="DI grid path")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--model", default=None, help="model JSON; its stored importance weights the space")
    g.add_argument("--weights", default=None, help="CSV (predictor,weight), e.g. expert weights")
    g.add_argument("--uniform-weights", action="store_true", help="unweighted space (default)")
    p.add_argument("--train-di-out", default=None,
                   help="also write fold-aware training DI CSV here")
    p.add_argument("--folds", type=_folds_spec, default=None,
                   help="fold strategy for --train-di-out (default: file/cluster/random precedence)")
    p.add_argument("--digits", type=int, default=6, help="significant digits in the output grid")
    p.add_argument("--image", default=None, help="also render the DI grid to this PPM file")
    p.add_argument("--palette", default="viridis", choices=sorted(fileio.PALETTES))
    _add_common(p)
    p.set_defaults(func=_cmd_di)

    p = sub.add_parser("aoa", help="threshold a DI grid into an applicability mask")
    p.add_argument("--di", required=True, help="DI grid (from the di subcommand)")
    p.add_argument("--train-di", default=None, help="training DI CSV (from di --train-di-out)")
    p.add_argument("--quantile", type=float, default=aoa_mod.DEFAULT_QUANTILE)
    p.add_argument("--threshold", type=float, default=None,
                   help="explicit DI threshold; overrides --quantile")
    p.add_argument("--out", required=True, help="mask grid path (1 inside, 0 outside)")
    p.add_argument("--image", default=None,
                   help="render DI with outside-AOA cells highlighted, to this PPM file")
    p.add_argument("--palette", default="viridis", choices=sorted(fileio.PALETTES))
    _add_common(p)
    p.set_defaults(func=_cmd_aoa)

    p = sub.add_parser("calibrate", help="run a scenario catalogue; report threshold calibration")
    p.add_argument("--config", required=True, help="catalogue config (key = value lines)")
    p.add_argument("--out", required=True, help="calibration CSV path")
    p.add_argument("--summary-out", default=None, help="default: <out>.summary.csv")
    p.add_argument("--which", choices=("primary", "contrast"), default="primary")
    p.add_argument("--jobs", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("simulate", help="run a scenario catalogue; write every artifact")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("metrics", help="score a prediction grid against truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--mask", default=None, help="AOA mask grid; restricts scoring")
    p.add_argument("--region", choices=("inside", "outside"), default="inside",
                   help="which side of the mask to score (default inside)")
    p.add_argument("--out", default=None, help="optional CSV output")
    _add_common(p)
    p.set_defaults(func=_cmd_metrics)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "threads", None) is not None:
        effective = kernels.set_threads(args.threads)
        _log(f"threads: capped at {effective}")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, ScenarioError) as exc:
        detail = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {detail}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
