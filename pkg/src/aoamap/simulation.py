"""Truth-known simulation harness.

Builds synthetic prediction tasks end to end: smooth random predictor grids,
a response surface defined by Gaussian functions of the first two principal
components of a predictor subset, random or clustered sampling designs, and a
scenario runner that trains a forest, cross-validates it, and computes the DI
surface plus per-quantile AOA error statistics. Because the truth grid is
known everywhere, the gap between cross-validation error and the true
prediction error inside a candidate AOA is measurable, which is what the
threshold calibration sweep consumes.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from . import aoa as aoa_mod
from . import forest as forest_mod
from . import predictor_space as ps
from . import validation as val
from .grids import Grid, GridGeometry, PredictorStack
from .kernels.rng import next_u64, stream_seed
from .samples import SampleTable

__all__ = [
    "FieldRecipe",
    "FieldSpec",
    "ResponseSpec",
    "RandomDesign",
    "ClusteredDesign",
    "ScenarioSpec",
    "StrategyEval",
    "ScenarioResult",
    "CatalogueResult",
    "PCAAxes",
    "ScenarioError",
    "default_field_spec",
    "response_spec_grid",
    "generate_predictor_stack",
    "pca_first_two",
    "gaussian_response",
    "sample_random",
    "sample_clustered",
    "run_scenario",
    "run_catalogue",
    "specs_from_config",
]


# ---------------------------------------------------------------------------
# specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldRecipe:
    """How to synthesize one smooth predictor grid.

    The base field is a sum of positive Gaussian bumps (count drawn uniformly
    from ``n_bumps``, amplitude/width uniform in their ranges, centers uniform
    over the grid) plus a linear trend with the given coefficients per
    normalized x/y coordinate. A recipe with ``parent`` set instead yields
    ``parent_scale * parent + parent_shift + noise_sd * z`` where z is this
    recipe's own bump field standardized to unit variance, giving a smoothly
    correlated sibling.
    """

    n_bumps: tuple = (5, 15)
    amplitude: tuple = (0.5, 2.0)
    width: tuple = (8.0, 25.0)
    trend: tuple = (0.0, 0.0)
    parent: int = None
    parent_scale: float = 1.0
    parent_shift: float = 0.0
    noise_sd: float = 0.0

    def __post_init__(self):
        lo, hi = self.n_bumps
        if lo < 0 or hi < lo:
            raise ValueError(f"bad bump-count range {self.n_bumps}")
        if self.amplitude[0] <= 0 or self.amplitude[1] < self.amplitude[0]:
            raise ValueError(f"amplitudes must be strictly positive, got {self.amplitude}")
        if self.width[0] <= 0 or self.width[1] < self.width[0]:
            raise ValueError(f"widths must be strictly positive, got {self.width}")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


@dataclass(frozen=True)
class FieldSpec:
    """Geometry, per-predictor recipes, and the master seed for a stack."""

    rows: int = 100
    cols: int = 100
    cell_size: float = 1.0
    recipes: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError(f"degenerate grid {self.rows}x{self.cols}")
        if len(self.recipes) < 6:
            raise ValueError("need at least 6 predictors (the response uses a 6-predictor subset)")
        for j, r in enumerate(self.recipes):
            if r.parent is not None and not (0 <= r.parent < j):
                raise ValueError(f"recipe {j}: parent index must precede it, got {r.parent}")

    @property
    def n_predictors(self) -> int:
        return len(self.recipes)

    @property
    def names(self) -> tuple:
        return tuple(f"v{j + 1}" for j in range(self.n_predictors))


def default_field_spec(p: int = 10, rows: int = 100, cols: int = 100, seed: int = 0) -> FieldSpec:
    """Six varied base predictors for the response subset plus p-6 distractors
    (independent fields and correlated children of subset members)."""
    if p < 6:
        raise ValueError("need at least 6 predictors")
    subset = [
        FieldRecipe(n_bumps=(8, 16), width=(5.0, 14.0), trend=(1.2, 0.0)),
        FieldRecipe(n_bumps=(8, 16), width=(4.0, 12.0)),
        FieldRecipe(n_bumps=(8, 16), width=(5.0, 14.0), trend=(0.0, -1.0)),
        FieldRecipe(n_bumps=(5, 10), width=(10.0, 22.0)),
        FieldRecipe(n_bumps=(8, 16), width=(4.0, 12.0), trend=(0.6, 0.6)),
        FieldRecipe(n_bumps=(10, 18), width=(4.0, 10.0), amplitude=(0.8, 2.5)),
    ]
    distractor_cycle = [
        FieldRecipe(width=(10.0, 30.0)),
        FieldRecipe(n_bumps=(10, 18), width=(3.0, 8.0)),
        FieldRecipe(parent=0, parent_scale=0.7, parent_shift=0.2, noise_sd=0.6),
        FieldRecipe(parent=2, parent_scale=-0.5, noise_sd=0.8),
    ]
    recipes = subset + [distractor_cycle[i % len(distractor_cycle)] for i in range(p - 6)]
    return FieldSpec(rows=rows, cols=cols, recipes=tuple(recipes), seed=seed)


@dataclass(frozen=True)
class ResponseSpec:
    """Gaussian response to the first two PCA axes of a predictor subset."""

    subset: tuple
    mu1: float = 2.0
    mu2: float = 0.0
    sigma1: float = 2.0
    sigma2: float = 2.0
    combine: str = "multiply"  # "multiply" | "add" (sensitivity flag)

    def __post_init__(self):
        if len(self.subset) < 2 or len(set(self.subset)) != len(self.subset):
            raise ValueError("subset must hold at least 2 distinct predictor indices")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("response standard deviations must be positive")
        if self.combine not in ("multiply", "add"):
            raise ValueError(f"unknown combine mode {self.combine!r}")


def response_spec_grid(subset, combine: str = "multiply"):
    """Full factorial over mu1 in {1,2,3}, mu2 in {-1,0,1}, sigma1/sigma2 in
    {1,2,3}: the 81 response surfaces of the calibration catalogue."""
    subset = tuple(subset)
    return [
        ResponseSpec(subset=subset, mu1=m1, mu2=m2, sigma1=s1, sigma2=s2, combine=combine)
        for m1 in (1.0, 2.0, 3.0)
        for m2 in (-1.0, 0.0, 1.0)
        for s1 in (1.0, 2.0, 3.0)
        for s2 in (1.0, 2.0, 3.0)
    ]


@dataclass(frozen=True)
class RandomDesign:
    """Uniform sampling of n distinct non-missing cells."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least 2 samples")


@dataclass(frozen=True)
class ClusteredDesign:
    """Parent locations uniform at random; members uniform within a Euclidean
    disc of ``radius`` cells around their parent."""

    n_clusters: int
    per_cluster: int
    radius: float = 3.0

    def __post_init__(self):
        if self.n_clusters < 2:
            raise ValueError("need at least 2 clusters")
        if self.per_cluster < 1:
            raise ValueError("need at least 1 point per cluster")
        if self.radius < 1:
            raise ValueError("cluster radius must be at least 1 cell")

    @property
    def n(self) -> int:
        return self.n_clusters * self.per_cluster


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything that determines one simulated scenario, including all seeds."""

    scenario_id: str
    field: FieldSpec
    response: ResponseSpec
    design: object
    seed: int
    strategy: str = "random"  # fold strategy for CV and training DI
    cv_folds: int = 10
    n_trees: int = 500
    min_node_size: int = 5
    mtry_grid: tuple = ()
    quantiles: tuple = aoa_mod.CALIBRATION_QUANTILES

    def __post_init__(self):
        if self.strategy not in ("random", "cluster"):
            raise ValueError(f"unknown fold strategy {self.strategy!r}")
        if self.strategy == "cluster" and not isinstance(self.design, ClusteredDesign):
            raise ValueError("cluster fold strategy requires a clustered design")
        if max(self.response.subset) >= self.field.n_predictors:
            raise ValueError("response subset index out of range for the field spec")


class ScenarioError(RuntimeError):
    """A scenario failed; the message carries the scenario id."""


# ---------------------------------------------------------------------------
# synthetic fields and response
# ---------------------------------------------------------------------------

def _unit(state):
    v, state = next_u64(state)
    return v / 2.0**64, state


def _bump_field(recipe: FieldRecipe, xg: np.ndarray, yg: np.ndarray, state):
    """Sum of positive Gaussian bumps plus linear trend; consumes the stream
    in a fixed order (count, then per bump: cx, cy, amplitude, width)."""
    rows, cols = xg.shape[0], xg.shape[1]
    lo, hi = recipe.n_bumps
    v, state = next_u64(state)
    k = lo + (v % (hi - lo + 1) if hi > lo else 0)
    field = np.zeros((rows, cols))
    for _ in range(k):
        u, state = _unit(state)
        cx = u * (cols - 1)
        u, state = _unit(state)
        cy = u * (rows - 1)
        u, state = _unit(state)
        amp = recipe.amplitude[0] + u * (recipe.amplitude[1] - recipe.amplitude[0])
        u, state = _unit(state)
        w = recipe.width[0] + u * (recipe.width[1] - recipe.width[0])
        field += amp * np.exp(-((xg - cx) ** 2 + (yg - cy) ** 2) / (2.0 * w * w))
    tx, ty = recipe.trend
    if tx or ty:
        field += tx * (xg / max(cols - 1, 1)) + ty * (yg / max(rows - 1, 1))
    return field, state


def generate_predictor_stack(spec: FieldSpec) -> PredictorStack:
    """Deterministic synthetic predictor stack; predictor j draws from its own
    stream derived from (seed, j), so recipes can be edited independently."""
    geometry = GridGeometry(rows=spec.rows, cols=spec.cols, cell_size=spec.cell_size)
    yg, xg = np.meshgrid(np.arange(spec.rows, dtype=np.float64),
                         np.arange(spec.cols, dtype=np.float64), indexing="ij")
    fields = []
    for j, recipe in enumerate(spec.recipes):
        state = stream_seed(spec.seed, j)
        base, state = _bump_field(recipe, xg, yg, state)
        if recipe.parent is None:
            fields.append(base)
            continue
        parent_vals = fields[recipe.parent]
        child = recipe.parent_scale * parent_vals + recipe.parent_shift
        if recipe.noise_sd > 0:
            sd = base.std()
            if sd > 0:
                child = child + recipe.noise_sd * (base - base.mean()) / sd
        fields.append(child)
    return PredictorStack(dict(zip(spec.names, fields)), geometry=geometry)


@dataclass(frozen=True)
class PCAAxes:
    """First two principal components of the standardized subset: score grids,
    orthonormal loading columns, and their eigenvalues."""

    pc1: Grid
    pc2: Grid
    loadings: np.ndarray
    explained: np.ndarray
    names: tuple


def pca_first_two(stack: PredictorStack, subset) -> PCAAxes:
    """PCA of the correlation matrix of the subset over non-missing cells.

    Sign convention: each component's first nonzero loading is positive, so
    eigenvector sign ambiguity cannot flip the response surface between runs.
    """
    names = tuple(stack.names[i] if isinstance(i, (int, np.integer)) else i for i in subset)
    if len(names) < 2 or len(set(names)) != len(names):
        raise ValueError("PCA subset must hold at least 2 distinct predictors")
    mat = stack.cell_matrix(names)
    finite = ~stack.mask.ravel()
    z = mat[finite]
    if z.shape[0] < 3:
        raise ValueError("need at least 3 non-missing cells for PCA")
    mean = z.mean(axis=0)
    sd = z.std(axis=0, ddof=1)
    constant = sd == 0
    if constant.any():
        bad = [n for n, c in zip(names, constant) if c]
        raise ValueError(f"constant predictor(s) in PCA subset: {', '.join(bad)}")
    z = (z - mean) / sd
    corr = (z.T @ z) / (z.shape[0] - 1)
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            if abs(corr[a, b]) >= 1.0 - 1e-8:
                raise ValueError(
                    f"degenerate PCA subset: {names[a]!r} and {names[b]!r} are collinear"
                )
    evals, evecs = np.linalg.eigh(corr)
    if evals[-2] <= 1e-10 * max(evals[-1], 1e-300):
        raise ValueError("PCA subset rank < 2")
    loadings = evecs[:, [-1, -2]].copy()
    for c in range(2):
        col = loadings[:, c]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            loadings[:, c] = -col
    scores = z @ loadings

    geom = stack.geometry
    grids = []
    for c in range(2):
        vals = np.full(geom.n_cells, np.nan)
        vals[finite] = scores[:, c]
        grids.append(Grid(values=vals.reshape(geom.rows, geom.cols), geometry=geom))
    return PCAAxes(pc1=grids[0], pc2=grids[1], loadings=loadings,
                   explained=evals[[-1, -2]].copy(), names=names)


def gaussian_response(pc1: Grid, pc2: Grid, rs: ResponseSpec) -> Grid:
    """Gaussian bells over the two score axes, combined and min-max rescaled
    to [0,1] over non-missing cells."""
    if not pc1.geometry.same_shape(pc2.geometry):
        raise ValueError("score grids are not co-registered")
    g1 = np.exp(-((pc1.values - rs.mu1) ** 2) / (2.0 * rs.sigma1**2))
    g2 = np.exp(-((pc2.values - rs.mu2) ** 2) / (2.0 * rs.sigma2**2))
    r = g1 * g2 if rs.combine == "multiply" else g1 + g2
    finite = np.isfinite(r)
    if not finite.any():
        raise ValueError("response surface has no non-missing cells")
    lo = r[finite].min()
    hi = r[finite].max()
    if hi - lo == 0:
        raise ValueError("constant response surface; min-max rescale undefined")
    return Grid(values=(r - lo) / (hi - lo), geometry=pc1.geometry)


# ---------------------------------------------------------------------------
# sampling designs
# ---------------------------------------------------------------------------

def _take_distinct(pool: np.ndarray, k: int, state):
    """First k entries of a partial Fisher-Yates shuffle of pool."""
    arr = pool.copy()
    m = arr.size
    for i in range(k):
        v, state = next_u64(state)
        j = i + v % (m - i)
        arr[i], arr[j] = arr[j], arr[i]
    return arr[:k], state


def _table_from_cells(stack: PredictorStack, truth: Grid, flat: np.ndarray, cluster=None) -> SampleTable:
    geom = stack.geometry
    rows, cols = np.divmod(flat, geom.cols)
    x, y = geom.cell_centers(rows, cols)
    return SampleTable(
        x=x,
        y=y,
        predictors=stack.values_at(rows, cols),
        predictor_names=stack.names,
        response=truth.values[rows, cols],
        cluster=cluster,
    )


def _eligible_cells(stack: PredictorStack, truth: Grid) -> np.ndarray:
    if not stack.geometry.same_shape(truth.geometry):
        raise ValueError("truth grid is not co-registered with the predictor stack")
    ok = ~stack.mask.ravel() & ~truth.missing.ravel()
    return np.nonzero(ok)[0].astype(np.int64)


def sample_random(stack: PredictorStack, truth: Grid, n: int, seed: int) -> SampleTable:
    """n distinct non-missing cells, uniform without replacement."""
    eligible = _eligible_cells(stack, truth)
    if n < 1 or n > eligible.size:
        raise ValueError(f"cannot sample {n} cells from {eligible.size} eligible ones")
    flat, _ = _take_distinct(eligible, n, stream_seed(seed, 0))
    return _table_from_cells(stack, truth, flat)


def sample_clustered(
    stack: PredictorStack,
    truth: Grid,
    n_clusters: int,
    per_cluster: int,
    radius: float,
    seed: int,
) -> SampleTable:
    """Clustered design: uniform parents, then members uniform within each
    parent's Euclidean disc (radius in cell units, clipped to the grid).

    Cells are globally distinct; a cluster whose clipped disc cannot supply
    per_cluster unused cells is an error.
    """
    if n_clusters < 2:
        raise ValueError("need at least 2 clusters")
    if radius < 1:
        raise ValueError("cluster radius must be at least 1 cell")
    eligible = _eligible_cells(stack, truth)
    if n_clusters > eligible.size:
        raise ValueError("more clusters than eligible cells")
    geom = stack.geometry
    ok = np.zeros(geom.n_cells, dtype=bool)
    ok[eligible] = True

    r_int = int(np.floor(radius))
    offsets = [
        (dr, dc)
        for dr in range(-r_int, r_int + 1)
        for dc in range(-r_int, r_int + 1)
        if dr * dr + dc * dc <= radius * radius
    ]

    state = stream_seed(seed, 0)
    parents, state = _take_distinct(eligible, n_clusters, state)
    taken = np.zeros(geom.n_cells, dtype=bool)
    members = []
    cluster_ids = []
    for ci, pf in enumerate(parents):
        pr, pc_ = divmod(int(pf), geom.cols)
        cands = []
        for dr, dc in offsets:
            rr, cc = pr + dr, pc_ + dc
            if 0 <= rr < geom.rows and 0 <= cc < geom.cols:
                f = rr * geom.cols + cc
                if ok[f] and not taken[f]:
                    cands.append(f)
        if len(cands) < per_cluster:
            raise ValueError(
                f"cluster {ci}: disc around cell ({pr},{pc_}) holds only "
                f"{len(cands)} free cells, need {per_cluster}"
            )
        chosen, state = _take_distinct(np.asarray(cands, dtype=np.int64), per_cluster, state)
        taken[chosen] = True
        members.append(chosen)
        cluster_ids.extend([ci] * per_cluster)

    flat = np.concatenate(members)
    return _table_from_cells(stack, truth, flat, cluster=np.asarray(cluster_ids, dtype=np.int64))


# ---------------------------------------------------------------------------
# scenario runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StrategyEval:
    """CV and DI bookkeeping for one fold strategy over one fitted model."""

    strategy: str
    folds: val.FoldAssignment
    cv: val.CVReport
    train_di: aoa_mod.TrainingDIResult
    stats: tuple  # CalibrationRow per requested quantile
    errors: aoa_mod.ScenarioErrors


@dataclass
class ScenarioResult:
    spec: ScenarioSpec
    samples: SampleTable
    truth: Grid
    prediction: Grid
    di: Grid
    di_uniform: Grid  # same cells, all predictor weights equal
    importance: ps.ImportanceWeights
    tuning: forest_mod.MtryTuning
    primary: StrategyEval
    contrast: StrategyEval = None  # random-fold eval for clustered scenarios
    seeds: dict = None

    @property
    def cell_error(self) -> np.ndarray:
        return self.prediction.values - self.truth.values


class _SimCache:
    """Share stacks / PCA axes / truth grids across scenarios of a catalogue
    (one landscape, many scenarios), keyed by the frozen spec objects."""

    def __init__(self):
        # reentrant: truth() builds via axes() which builds via stack()
        self._lock = threading.RLock()
        self._stacks = {}
        self._axes = {}
        self._truths = {}

    def stack(self, field: FieldSpec) -> PredictorStack:
        with self._lock:
            if field not in self._stacks:
                self._stacks[field] = generate_predictor_stack(field)
            return self._stacks[field]

    def axes(self, field: FieldSpec, subset: tuple) -> PCAAxes:
        key = (field, subset)
        with self._lock:
            if key not in self._axes:
                self._axes[key] = pca_first_two(self.stack(field), subset)
            return self._axes[key]

    def truth(self, field: FieldSpec, response: ResponseSpec) -> Grid:
        key = (field, response)
        with self._lock:
            if key not in self._truths:
                axes = self.axes(field, response.subset)
                self._truths[key] = gaussian_response(axes.pc1, axes.pc2, response)
            return self._truths[key]


def _default_mtry_grid(p: int) -> tuple:
    return tuple(sorted({max(1, 2 if p >= 2 else 1), max(1, p // 2), p}))


def _strategy_eval(
    strategy: str,
    folds: val.FoldAssignment,
    samples: SampleTable,
    config: forest_mod.ForestConfig,
    params: ps.StandardizationParams,
    weights: ps.ImportanceWeights,
    cell_di: np.ndarray,
    cell_error: np.ndarray,
    quantiles,
    scenario_id: str,
) -> StrategyEval:
    report = val.cross_validate(samples, folds, config)
    tdi = aoa_mod.training_di(samples, folds, params, weights, quantiles=quantiles)
    errors = aoa_mod.ScenarioErrors(
        scenario_id=scenario_id,
        cv_rmse=report.cv_rmse,
        cell_error=cell_error,
        cell_di=cell_di,
        training_di=tdi.di,
    )
    stats = aoa_mod.calibrate_quantiles([errors], quantiles).rows
    return StrategyEval(strategy=strategy, folds=folds, cv=report,
                        train_di=tdi, stats=stats, errors=errors)


def run_scenario(spec: ScenarioSpec, _cache: _SimCache = None) -> ScenarioResult:
    """Full pipeline for one scenario; deterministic given the spec.

    Steps: landscape + truth, sampling, mtry tuning (always on random folds),
    final fit, permutation importance, prediction/DI grids, then CV + training
    DI + per-quantile AOA stats under the spec's fold strategy. Clustered
    scenarios additionally get the same evaluation under random folds as the
    ``contrast`` field, so fold-strategy effects are measurable on one model.
    """
    try:
        return _run_scenario(spec, _cache or _SimCache())
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError(f"scenario {spec.scenario_id}: {exc}") from exc


def _run_scenario(spec: ScenarioSpec, cache: _SimCache) -> ScenarioResult:
    stack = cache.stack(spec.field)
    truth = cache.truth(spec.field, spec.response)

    seeds = {
        "sampling": stream_seed(spec.seed, 1),
        "tuning_folds": stream_seed(spec.seed, 2),
        "tuning_forest": stream_seed(spec.seed, 3),
        "model": stream_seed(spec.seed, 4),
        "importance": stream_seed(spec.seed, 5),
        "cv_folds": stream_seed(spec.seed, 6),
        "contrast_folds": stream_seed(spec.seed, 7),
    }

    if isinstance(spec.design, RandomDesign):
        samples = sample_random(stack, truth, spec.design.n, seeds["sampling"])
    elif isinstance(spec.design, ClusteredDesign):
        samples = sample_clustered(
            stack, truth, spec.design.n_clusters, spec.design.per_cluster,
            spec.design.radius, seeds["sampling"],
        )
    else:
        raise ValueError(f"unknown sampling design {type(spec.design).__name__}")

    n = len(samples)
    p = samples.n_predictors
    grid = tuple(spec.mtry_grid) or _default_mtry_grid(p)
    tune_folds = val.assign_random_folds(n, min(spec.cv_folds, n), seeds["tuning_folds"])
    base_config = forest_mod.ForestConfig(
        n_trees=spec.n_trees, min_node_size=spec.min_node_size, seed=seeds["tuning_forest"]
    )
    tuning = forest_mod.tune_mtry(samples, grid, tune_folds, base_config)

    config = forest_mod.ForestConfig(
        n_trees=spec.n_trees, mtry=tuning.best_mtry,
        min_node_size=spec.min_node_size, seed=seeds["model"],
    )
    model = forest_mod.train_forest(samples, config)
    model.tuning = tuning
    importance = forest_mod.permutation_importance(model, samples, seed=seeds["importance"])
    model.importance = importance

    params = ps.fit_standardizer(samples)
    cell_matrix = stack.cell_matrix(model.predictor_names)
    pred_vals = forest_mod.predict(model, cell_matrix)
    prediction = Grid(values=pred_vals.reshape(truth.values.shape), geometry=stack.geometry)
    di = ps.di_grid(stack, samples, params, importance)
    di_uniform = ps.di_grid(stack, samples, params, ps.ImportanceWeights.uniform(params.names))
    cell_error = (prediction.values - truth.values).ravel()
    cell_di = di.values.ravel()

    if spec.strategy == "cluster":
        primary_folds = val.assign_cluster_folds(samples.cluster)
    else:
        primary_folds = val.assign_random_folds(n, min(spec.cv_folds, n), seeds["cv_folds"])
    primary = _strategy_eval(
        spec.strategy, primary_folds, samples, config, params, importance,
        cell_di, cell_error, spec.quantiles, spec.scenario_id,
    )

    contrast = None
    if spec.strategy == "cluster":
        contrast_folds = val.assign_random_folds(n, min(spec.cv_folds, n), seeds["contrast_folds"])
        contrast = _strategy_eval(
            "random", contrast_folds, samples, config, params, importance,
            cell_di, cell_error, spec.quantiles, spec.scenario_id,
        )

    return ScenarioResult(
        spec=spec,
        samples=samples,
        truth=truth,
        prediction=prediction,
        di=di,
        di_uniform=di_uniform,
        importance=importance,
        tuning=tuning,
        primary=primary,
        contrast=contrast,
        seeds=seeds,
    )


@dataclass
class CatalogueResult:
    results: tuple
    failures: tuple  # (scenario_id, message) pairs

    def errors(self, which: str = "primary"):
        """ScenarioErrors payloads for calibrate_quantiles."""
        if which not in ("primary", "contrast"):
            raise ValueError(f"unknown evaluation {which!r}")
        out = []
        for r in self.results:
            ev = r.primary if which == "primary" else r.contrast
            if ev is not None:
                out.append(ev.errors)
        return out


def run_catalogue(specs, n_jobs: int = 1, progress=None) -> CatalogueResult:
    """Run scenarios independently; failures are recorded and skipped, and the
    catalogue only fails when every scenario does. Results keep spec order
    regardless of execution schedule."""
    specs = list(specs)
    if not specs:
        raise ValueError("empty scenario catalogue")
    cache = _SimCache()
    slots = [None] * len(specs)
    failures = []

    def _one(i):
        return run_scenario(specs[i], _cache=cache)

    if n_jobs <= 1:
        for i, spec in enumerate(specs):
            try:
                slots[i] = _one(i)
                status = "ok"
            except ScenarioError as exc:
                failures.append((spec.scenario_id, str(exc)))
                status = "failed"
            if progress is not None:
                progress(i + 1, len(specs), spec.scenario_id, status)
    else:
        from concurrent.futures import ThreadPoolExecutor, as_completed

        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            futures = {pool.submit(_one, i): i for i in range(len(specs))}
            done = 0
            for fut in as_completed(futures):
                i = futures[fut]
                try:
                    slots[i] = fut.result()
                    status = "ok"
                except ScenarioError as exc:
                    failures.append((specs[i].scenario_id, str(exc)))
                    status = "failed"
                done += 1
                if progress is not None:
                    progress(done, len(specs), specs[i].scenario_id, status)

    results = tuple(r for r in slots if r is not None)
    if not results:
        raise ScenarioError(
            "every scenario failed; first failure: "
            + (failures[0][1] if failures else "unknown")
        )
    failures.sort(key=lambda f: f[0])
    return CatalogueResult(results=results, failures=tuple(failures))


# ---------------------------------------------------------------------------
# catalogue configuration (key = value text format; see configs/)
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {
    "rows", "cols", "predictors", "subset_size", "field_seed", "combine",
    "design", "sizes", "replicates", "response_specs", "response_ids",
    "clusters", "per_cluster", "radius", "cv_folds", "strategy", "n_trees",
    "min_node_size", "mtry_grid", "quantiles", "seed",
}


def _parse_list(text: str, conv):
    return tuple(conv(tok.strip()) for tok in str(text).split(",") if tok.strip())


def specs_from_config(cfg: dict) -> list:
    """Expand a catalogue config mapping into ScenarioSpec objects.

    Scenario seeds derive from the master ``seed`` by scenario index, so
    editing the catalogue size changes later scenarios only.
    """
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    get = lambda k, d: cfg.get(k, d)

    rows = int(get("rows", 100))
    cols = int(get("cols", 100))
    p = int(get("predictors", 10))
    subset_size = int(get("subset_size", 6))
    if subset_size > p:
        raise ValueError("subset_size exceeds predictor count")
    field = default_field_spec(p=p, rows=rows, cols=cols, seed=int(get("field_seed", 90125)))
    subset = tuple(range(subset_size))

    all_responses = response_spec_grid(subset, combine=str(get("combine", "multiply")))
    n_all = len(all_responses)
    if "response_ids" in cfg:
        if "response_specs" in cfg:
            raise ValueError("give either response_specs (a count) or response_ids, not both")
        picked = list(_parse_list(cfg["response_ids"], int))
        bad = [i for i in picked if not 0 <= i < n_all]
        if bad:
            raise ValueError(f"response_ids out of range [0, {n_all - 1}]: {bad}")
        if len(set(picked)) != len(picked):
            raise ValueError("duplicate response_ids")
    else:
        n_resp = int(get("response_specs", n_all))
        if not 1 <= n_resp <= n_all:
            raise ValueError(f"response_specs must be in [1, {n_all}]")
        # Subsample the factorial with a stride coprime to its length so every
        # factor level (means and widths alike) appears; a plain evenly-spaced
        # pick aliases with the sigma cycle and lands on the extremes only.
        if n_resp == n_all:
            picked = list(range(n_all))
        else:
            stride = max(1, round(n_all / n_resp))
            while math.gcd(stride, n_all) > 1:
                stride += 1
            picked = sorted((i * stride) % n_all for i in range(n_resp))
    responses = [all_responses[i] for i in picked]

    design_kind = str(get("design", "random")).strip().lower()
    strategy = str(get("strategy", "cluster" if design_kind == "clustered" else "random")).strip().lower()
    replicates = int(get("replicates", 2))
    master_seed = int(get("seed", 1))
    common = dict(
        field=field,
        strategy=strategy,
        cv_folds=int(get("cv_folds", 10)),
        n_trees=int(get("n_trees", 500)),
        min_node_size=int(get("min_node_size", 5)),
        mtry_grid=_parse_list(get("mtry_grid", ""), int),
        quantiles=_parse_list(get("quantiles", "0.25,0.5,0.9,0.95,0.99,1.0"), float),
    )

    specs = []
    idx = 0
    if design_kind == "random":
        sizes = _parse_list(get("sizes", "25,50,100"), int)
        for ri, rs in zip(picked, responses):
            for n in sizes:
                for rep in range(replicates):
                    specs.append(ScenarioSpec(
                        scenario_id=f"random-r{ri:02d}-n{n}-rep{rep + 1}",
                        response=rs,
                        design=RandomDesign(n=n),
                        seed=stream_seed(master_seed, idx),
                        **common,
                    ))
                    idx += 1
    elif design_kind == "clustered":
        design = ClusteredDesign(
            n_clusters=int(get("clusters", 50)),
            per_cluster=int(get("per_cluster", 10)),
            radius=float(get("radius", 3.0)),
        )
        for ri, rs in zip(picked, responses):
            for rep in range(replicates):
                specs.append(ScenarioSpec(
                    scenario_id=f"cluster-r{ri:02d}-rep{rep + 1}",
                    response=rs,
                    design=design,
                    seed=stream_seed(master_seed, idx),
                    **common,
                ))
                idx += 1
    else:
        raise ValueError(f"unknown design {design_kind!r}")
    return specs
