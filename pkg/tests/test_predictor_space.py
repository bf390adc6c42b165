import numpy as np
import pytest

from aoamap.predictor_space import (
    ImportanceWeights,
    StandardizationParams,
    WeightedPointSet,
    apply_weights,
    di_grid,
    dissimilarity_index,
    fit_standardizer,
    nearest_training_distance,
    pairwise_mean_distance,
    standardize,
    weighted_points,
)
from aoamap.grids import Grid, GridGeometry, PredictorStack

from conftest import make_table


def identity_params(p=1):
    names = tuple(f"p{j + 1}" for j in range(p))
    return StandardizationParams(names=names, means=np.zeros(p), sds=np.ones(p))


def brute_force_di(train, queries, excluded_fold=None, train_fold=None):
    """Naive oracle: double loops over standardized+weighted coordinates."""
    n = train.shape[0]
    dists = [
        float(np.sqrt(((train[i] - train[j]) ** 2).sum()))
        for i in range(n)
        for j in range(i + 1, n)
    ]
    d_bar = sum(dists) / len(dists)
    out = []
    for k, q in enumerate(queries):
        best = np.inf
        for i in range(n):
            if excluded_fold is not None and train_fold[i] == excluded_fold[k]:
                continue
            best = min(best, float(np.sqrt(((q - train[i]) ** 2).sum())))
        out.append(best / d_bar)
    return np.asarray(out)


class TestFitStandardizer:
    def test_simple_column(self, table_3pts):
        params = fit_standardizer(table_3pts)
        assert params.means[0] == 2.0
        assert params.sds[0] == 1.0

    def test_constant_column_dropped(self):
        t = make_table(np.column_stack([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]]))
        with pytest.warns(UserWarning, match="zero-variance"):
            params = fit_standardizer(t)
        assert params.names == ("p1",)
        assert params.dropped == ("p2",)

    def test_two_columns_hand_computed(self):
        t = make_table(np.array([[0.0, -1.0], [10.0, 1.0]]))
        params = fit_standardizer(t)
        assert params.means == pytest.approx([5.0, 0.0])
        assert params.sds == pytest.approx([7.0710678118654755, 1.4142135623730951])

    def test_too_few_rows(self):
        with pytest.raises(ValueError, match="2"):
            fit_standardizer(make_table([[1.0]]))

    def test_all_constant_errors(self):
        t = make_table(np.full((3, 2), 4.0))
        with pytest.raises(ValueError):
            fit_standardizer(t)

    def test_unknown_predictor_name(self, table_3pts):
        with pytest.raises(KeyError):
            fit_standardizer(table_3pts, predictor_names=["nope"])


class TestStandardize:
    def test_mean_vector_maps_to_zero(self, rng):
        t = make_table(rng.normal(size=(10, 3)))
        params = fit_standardizer(t)
        row = standardize(params.means[None, :], params)
        assert np.allclose(row, 0.0, atol=1e-12)

    def test_self_standardization_unit_moments(self, rng):
        t = make_table(rng.normal(2.0, 3.0, size=(20, 2)))
        params = fit_standardizer(t)
        z = standardize(t, params)
        assert np.allclose(z.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(z.std(axis=0, ddof=1), 1.0, atol=1e-12)

    def test_one_sd_step(self, table_3pts):
        params = fit_standardizer(table_3pts)
        assert standardize(np.array([[3.0]]), params)[0, 0] == pytest.approx(1.0)

    def test_infinite_input_rejected(self, table_3pts):
        params = fit_standardizer(table_3pts)
        with pytest.raises(ValueError, match="finite"):
            standardize(np.array([[np.inf]]), params)

    def test_nan_query_allowed(self, table_3pts):
        params = fit_standardizer(table_3pts)
        assert np.isnan(standardize(np.array([[np.nan]]), params)[0, 0])


class TestApplyWeights:
    def test_identity_weights(self):
        scaled = np.array([[1.0, -2.0], [0.5, 3.0]])
        w = ImportanceWeights(names=("p1", "p2"), values=np.ones(2))
        assert np.array_equal(apply_weights(scaled, w).points, scaled)

    def test_elementwise_product(self):
        scaled = np.array([[3.0, 9.0]])
        w = ImportanceWeights(names=("p1", "p2"), values=np.array([2.0, 0.0]))
        assert np.array_equal(apply_weights(scaled, w).points, [[6.0, 0.0]])

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError, match="from_raw"):
            ImportanceWeights(names=("p1",), values=np.array([-0.5]))

    def test_from_raw_clamps_with_warning(self):
        with pytest.warns(UserWarning, match="clamp"):
            w = ImportanceWeights.from_raw(("a", "b"), [2.0, -0.3])
        assert np.array_equal(w.values, [2.0, 0.0])
        assert np.array_equal(w.raw, [2.0, -0.3])

    def test_from_raw_all_nonpositive_errors(self):
        with pytest.raises(ValueError):
            ImportanceWeights.from_raw(("a", "b"), [-1.0, 0.0])


class TestPairwiseMeanDistance:
    def test_single_pair(self):
        pts = WeightedPointSet(points=np.array([[0.0], [3.0]]))
        assert pairwise_mean_distance(pts) == pytest.approx(3.0)

    def test_three_collinear(self):
        pts = WeightedPointSet(points=np.array([[0.0], [1.0], [2.0]]))
        assert pairwise_mean_distance(pts) == pytest.approx(4.0 / 3.0)

    def test_matches_brute_force(self, rng):
        x = rng.normal(size=(10, 4))
        pts = WeightedPointSet(points=x)
        n = 10
        pairs = [
            np.sqrt(((x[i] - x[j]) ** 2).sum()) for i in range(n) for j in range(i + 1, n)
        ]
        assert pairwise_mean_distance(pts) == pytest.approx(np.mean(pairs), abs=1e-12)

    def test_single_point_errors(self):
        with pytest.raises(ValueError):
            pairwise_mean_distance(WeightedPointSet(points=np.array([[1.0]])))

    def test_identical_points_error(self):
        pts = WeightedPointSet(points=np.zeros((3, 2)))
        with pytest.raises(ValueError, match="identical|zero"):
            pairwise_mean_distance(pts)


class TestNearestTrainingDistance:
    def test_coincident_query_is_zero(self):
        train = WeightedPointSet(points=np.array([[1.0, 2.0], [3.0, 4.0]]))
        d = nearest_training_distance(np.array([[3.0, 4.0]]), train)
        assert d[0] == 0.0

    def test_fig2_style_distance(self):
        train = WeightedPointSet(points=np.array([[0.0], [2.29]]))
        d = nearest_training_distance(np.array([[4.75]]), train)
        assert d[0] == pytest.approx(2.46)

    def test_fold_exclusion_vs_filtered_scan(self, rng):
        x = rng.normal(size=(12, 3))
        fold = np.array([0, 1, 2] * 4)
        train = WeightedPointSet(points=x, fold=fold)
        for f in range(3):
            got = nearest_training_distance(x[fold == f], train, excluded_fold=f)
            keep = x[fold != f]
            want = [np.sqrt(((q - keep) ** 2).sum(axis=1)).min() for q in x[fold == f]]
            assert np.allclose(got, want, atol=1e-12)

    def test_all_excluded_errors(self):
        train = WeightedPointSet(points=np.array([[0.0], [1.0]]), fold=np.array([0, 0]))
        with pytest.raises(ValueError):
            nearest_training_distance(np.array([[0.5]]), train, excluded_fold=0)


class TestDissimilarityIndex:
    def test_fig2_quotient(self):
        # two training points 2.29 apart; query 2.46 beyond the nearer one
        train = make_table([[0.0], [2.29]])
        di = dissimilarity_index(
            np.array([[4.75]]), train, identity_params(), ImportanceWeights.uniform(("p1",))
        )
        assert di[0] == pytest.approx(2.46 / 2.29, abs=1e-12)
        assert di[0] == pytest.approx(1.074, abs=1e-3)

    def test_coincident_query_zero(self, rng):
        x = rng.normal(size=(8, 2))
        train = make_table(x)
        params = fit_standardizer(train)
        w = ImportanceWeights.uniform(params.names)
        di = dissimilarity_index(x[3][None, :], train, params, w)
        assert di[0] == 0.0

    def test_weight_scale_invariance(self, rng):
        x = rng.normal(size=(15, 3))
        q = rng.normal(size=(6, 3))
        train = make_table(x)
        params = fit_standardizer(train)
        w1 = ImportanceWeights(names=params.names, values=np.array([1.0, 2.0, 0.5]))
        w2 = ImportanceWeights(names=params.names, values=np.array([2.0, 4.0, 1.0]))
        d1 = dissimilarity_index(q, train, params, w1)
        d2 = dissimilarity_index(q, train, params, w2)
        assert np.allclose(d1, d2, atol=1e-12)

    def test_nan_query_propagates(self, table_3pts):
        params = fit_standardizer(table_3pts)
        w = ImportanceWeights.uniform(params.names)
        di = dissimilarity_index(np.array([[np.nan], [2.0]]), table_3pts, params, w)
        assert np.isnan(di[0]) and np.isfinite(di[1])

    def test_matches_brute_force_oracle(self, rng):
        x = rng.normal(size=(20, 5))
        q = rng.normal(size=(7, 5))
        train = make_table(x)
        params = fit_standardizer(train)
        w = ImportanceWeights(names=params.names, values=rng.uniform(0.1, 3.0, 5))
        got = dissimilarity_index(q, train, params, w)
        z = (x - params.means) / params.sds * w.values
        zq = (q - params.means) / params.sds * w.values
        assert np.allclose(got, brute_force_di(z, zq), atol=1e-10)


class TestDiGrid:
    def _stack(self, values_by_name):
        geom = None
        grids = {}
        for name, vals in values_by_name.items():
            vals = np.asarray(vals, dtype=np.float64)
            geom = GridGeometry(rows=vals.shape[0], cols=vals.shape[1])
            grids[name] = Grid(values=vals, geometry=geom)
        return PredictorStack(grids=grids)

    def test_single_cell_equal_to_training_point(self):
        train = make_table([[1.0], [3.0]])
        params = fit_standardizer(train)
        w = ImportanceWeights.uniform(params.names)
        stack = self._stack({"p1": [[1.0, 2.0]]})
        out = di_grid(stack, train, params, w)
        assert out.values[0, 0] == 0.0

    def test_matches_per_cell_calls(self, rng):
        vals = {f"p{j + 1}": rng.normal(size=(20, 20)) for j in range(3)}
        stack = self._stack(vals)
        train = make_table(rng.normal(size=(12, 3)))
        params = fit_standardizer(train)
        w = ImportanceWeights(names=params.names, values=rng.uniform(0.2, 2.0, 3))
        grid_out = di_grid(stack, train, params, w)
        cells = stack.cell_matrix(params.names)
        per_cell = dissimilarity_index(cells, train, params, w)
        assert np.array_equal(grid_out.values.ravel(), per_cell)

    def test_missing_cells_stay_missing(self, rng):
        vals = rng.normal(size=(4, 4))
        vals[1, 2] = np.nan
        stack = self._stack({"p1": vals})
        train = make_table([[0.0], [1.0]])
        params = fit_standardizer(train)
        out = di_grid(stack, train, params, ImportanceWeights.uniform(params.names))
        assert np.isnan(out.values[1, 2])
        assert np.isfinite(out.values[0, 0])

    def test_zero_weight_predictor_is_irrelevant(self, rng):
        base = rng.normal(size=(6, 6))
        junk1 = rng.normal(size=(6, 6))
        junk2 = rng.normal(size=(6, 6))
        train = make_table(np.column_stack([rng.normal(size=10), rng.normal(size=10)]))
        params = fit_standardizer(train)
        w = ImportanceWeights(names=params.names, values=np.array([1.0, 0.0]))
        a = di_grid(self._stack({"p1": base, "p2": junk1}), train, params, w)
        b = di_grid(self._stack({"p1": base, "p2": junk2}), train, params, w)
        assert np.array_equal(a.values, b.values)


def test_weighted_points_composes_standardize_and_weights(rng):
    x = rng.normal(size=(9, 2))
    t = make_table(x)
    params = fit_standardizer(t)
    w = ImportanceWeights(names=params.names, values=np.array([2.0, 3.0]))
    pts = weighted_points(t, params, w)
    assert np.allclose(pts.points, standardize(t, params) * w.values)
