import numpy as np
import pytest

from aoamap.aoa import (
    CALIBRATION_QUANTILES,
    AOAMask,
    ScenarioErrors,
    TrainingDIResult,
    aoa_mask,
    calibrate_quantiles,
    di_threshold,
    training_di,
)
from aoamap.grids import Grid, GridGeometry
from aoamap.predictor_space import (
    ImportanceWeights,
    StandardizationParams,
    fit_standardizer,
)
from aoamap.validation import FoldAssignment, assign_random_folds, folds_from_labels

from conftest import make_table


def identity_params(p=1):
    names = tuple(f"p{j + 1}" for j in range(p))
    return StandardizationParams(names=names, means=np.zeros(p), sds=np.ones(p))


def uniform(p=1):
    return ImportanceWeights.uniform(tuple(f"p{j + 1}" for j in range(p)))


class TestTrainingDI:
    def test_single_pair_two_folds(self):
        # the only pair is 3 apart, so d_bar = 3 and each point's
        # cross-fold nearest distance is also 3
        t = make_table([[0.0], [3.0]])
        res = training_di(t, folds_from_labels([0, 1]), identity_params(), uniform())
        assert res.d_bar == pytest.approx(3.0)
        assert np.allclose(res.di, [1.0, 1.0])

    def test_loo_folds_equal_nearest_other_point(self, rng):
        x = rng.normal(size=(15, 3))
        t = make_table(x)
        params = fit_standardizer(t)
        w = uniform(3)
        loo = folds_from_labels(np.arange(15))
        res = training_di(t, loo, params, w)
        z = (x - params.means) / params.sds
        want = []
        for i in range(15):
            d = np.sqrt(((z - z[i]) ** 2).sum(axis=1))
            d[i] = np.inf
            want.append(d.min())
        assert np.allclose(res.di, np.asarray(want) / res.d_bar, atol=1e-12)

    def test_three_random_folds_brute_force(self, rng):
        x = rng.normal(size=(30, 4))
        t = make_table(x)
        params = fit_standardizer(t)
        w = ImportanceWeights(names=params.names, values=rng.uniform(0.5, 2.0, 4))
        folds = assign_random_folds(30, 3, seed=7)
        res = training_di(t, folds, params, w)
        z = (x - params.means) / params.sds * w.values
        pairs = [
            np.sqrt(((z[i] - z[j]) ** 2).sum())
            for i in range(30)
            for j in range(i + 1, 30)
        ]
        d_bar = np.mean(pairs)
        for i in range(30):
            other = z[folds.fold != folds.fold[i]]
            want = np.sqrt(((other - z[i]) ** 2).sum(axis=1)).min() / d_bar
            assert res.di[i] == pytest.approx(want, abs=1e-12)

    def test_single_fold_rejected(self):
        t = make_table([[0.0], [1.0]])
        with pytest.raises(ValueError):
            training_di(t, folds_from_labels([0, 0]), identity_params(), uniform())

    def test_threshold_table_contains_requested_quantiles(self):
        t = make_table([[0.0], [1.0], [2.0], [5.0]])
        res = training_di(
            t,
            folds_from_labels([0, 1, 0, 1]),
            identity_params(),
            uniform(),
            quantiles=(0.5, 0.95),
        )
        assert set(res.thresholds) == {0.5, 0.95}
        assert res.threshold(0.95) == res.thresholds[0.95]

    def test_fold_count_mismatch(self):
        t = make_table([[0.0], [1.0], [2.0]])
        with pytest.raises(ValueError, match="match"):
            training_di(t, folds_from_labels([0, 1]), identity_params(), uniform())


class TestDiThreshold:
    def test_quantile_one_is_maximum(self):
        assert di_threshold(np.array([0.2, 0.5, 0.9]), 1.0) == 0.9

    def test_interpolated_median(self):
        assert di_threshold(np.array([1.0, 3.0]), 0.5) == pytest.approx(2.0)

    def test_interpolation_position(self):
        # h = (n-1)q + 1 with n=5, q=0.95 -> order stats 4.8: 0.2 above the 4th
        di = np.array([10.0, 20.0, 30.0, 40.0, 50.0])
        assert di_threshold(di, 0.95) == pytest.approx(48.0)

    def test_monotone_in_quantile(self, rng):
        di = rng.uniform(0, 2, 40)
        qs = np.linspace(0.01, 1.0, 25)
        thr = [di_threshold(di, q) for q in qs]
        assert all(b >= a for a, b in zip(thr, thr[1:]))

    def test_invalid_quantile(self):
        for q in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                di_threshold(np.array([1.0]), q)

    def test_accepts_training_di_result(self):
        t = make_table([[0.0], [3.0]])
        res = training_di(t, folds_from_labels([0, 1]), identity_params(), uniform())
        assert di_threshold(res, 1.0) == pytest.approx(1.0)


def make_di_grid(values):
    values = np.asarray(values, dtype=np.float64)
    geom = GridGeometry(rows=values.shape[0], cols=values.shape[1])
    return Grid(values=values, geometry=geom)


class TestAoaMask:
    def test_threshold_at_max_includes_everything(self, rng):
        g = make_di_grid(rng.uniform(0, 3, (6, 6)))
        m = aoa_mask(g, float(g.values.max()))
        assert m.n_inside == 36 and m.n_outside == 0

    def test_threshold_zero_only_zero_cells(self):
        g = make_di_grid([[0.0, 0.4], [0.2, 0.0]])
        m = aoa_mask(g, 0.0)
        assert m.n_inside == 2
        assert m.inside[0, 0] and m.inside[1, 1]

    def test_equality_counts_as_inside(self):
        g = make_di_grid([[0.5, 0.6]])
        m = aoa_mask(g, 0.5)
        assert m.inside[0, 0] and not m.inside[0, 1]

    def test_missing_cells_tracked(self):
        g = make_di_grid([[0.1, np.nan], [0.9, 0.3]])
        m = aoa_mask(g, 0.5)
        assert m.n_missing == 1 and m.missing[0, 1]
        assert m.n_inside == 2 and m.n_outside == 1

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            aoa_mask(make_di_grid([[0.1]]), -0.01)

    def test_nested_masks_across_quantiles(self, rng):
        di_train = rng.uniform(0, 2, 50)
        g = make_di_grid(rng.uniform(0, 2.5, (10, 10)))
        prev = None
        for q in (0.5, 0.95, 0.99):
            m = aoa_mask(g, di_threshold(di_train, q), quantile=q)
            if prev is not None:
                assert np.all(prev.inside <= m.inside)
            prev = m

    def test_to_grid_encoding(self):
        g = make_di_grid([[0.1, np.nan, 0.9]])
        out = aoa_mask(g, 0.5).to_grid()
        assert out.values[0, 0] == 1.0
        assert np.isnan(out.values[0, 1])
        assert out.values[0, 2] == 0.0


def scenario(scenario_id, cv_rmse, cell_error, cell_di, train_di):
    return ScenarioErrors(
        scenario_id=scenario_id,
        cv_rmse=cv_rmse,
        cell_error=np.asarray(cell_error, dtype=np.float64),
        cell_di=np.asarray(cell_di, dtype=np.float64),
        training_di=np.asarray(train_di, dtype=np.float64),
    )


class TestCalibrateQuantiles:
    def test_perfect_predictions_diff_equals_cv_rmse(self):
        sc = scenario("perfect", 0.4, np.zeros(20), np.linspace(0, 1, 20), np.linspace(0, 1, 10))
        table = calibrate_quantiles([sc], CALIBRATION_QUANTILES)
        for row in table.rows:
            assert row.rmspe_in == 0.0
            assert row.diff == pytest.approx(0.4)

    def test_aoa_nesting_across_quantiles(self, rng):
        sc = scenario("a", 0.3, rng.normal(size=60), rng.uniform(0, 2, 60), rng.uniform(0, 2, 25))
        table = calibrate_quantiles([sc], (0.25, 1.0))
        low = next(r for r in table.rows if r.quantile == 0.25)
        high = next(r for r in table.rows if r.quantile == 1.0)
        assert high.n_inside >= low.n_inside

    def test_empty_aoa_reports_missing_row(self):
        # every cell DI exceeds even the max training DI
        sc = scenario("far", 0.2, np.ones(5), np.full(5, 10.0), np.array([0.1, 0.2]))
        table = calibrate_quantiles([sc], (0.95,))
        row = table.rows[0]
        assert row.n_inside == 0
        assert np.isnan(row.rmspe_in) and np.isnan(row.diff)
        assert table.summaries[0].n_scenarios == 0

    def test_summary_statistics(self):
        scs = [
            scenario("s1", 0.5, np.full(4, 0.1), np.zeros(4), np.array([1.0, 1.0])),
            scenario("s2", 0.9, np.full(4, 0.1), np.zeros(4), np.array([1.0, 1.0])),
        ]
        table = calibrate_quantiles(scs, (0.95,))
        s = table.summaries[0]
        assert s.n_scenarios == 2
        assert s.mean_diff == pytest.approx(np.mean([0.5 - 0.1, 0.9 - 0.1]))
        assert s.median_diff == pytest.approx(0.6)

    def test_best_quantile_picks_smallest_abs_mean_diff(self):
        # cells at DI 0 and 2; training DI {1,3}: q=0.5 -> thr 2 (all inside),
        # q=1.0 -> thr 3 (all inside). Same here, so craft distinct errors.
        err = np.array([0.1, 0.5])
        di = np.array([0.0, 2.5])
        sc = scenario("s", 0.1, err, di, np.array([1.0, 3.0]))
        table = calibrate_quantiles([sc], (0.5, 1.0))
        # q=0.5: thr 2 -> only the 0.1-error cell inside, diff = 0.0
        # q=1.0: thr 3 -> both inside, diff = 0.1 - rms(0.1,0.5) < 0
        assert table.best_quantile == 0.5

    def test_no_scenarios_rejected(self):
        with pytest.raises(ValueError):
            calibrate_quantiles([], (0.95,))

    def test_rows_cover_quantile_by_scenario_product(self, rng):
        scs = [
            scenario(f"s{i}", 0.2, rng.normal(size=9), rng.uniform(0, 1, 9), rng.uniform(0, 1, 7))
            for i in range(3)
        ]
        table = calibrate_quantiles(scs, CALIBRATION_QUANTILES)
        assert len(table.rows) == 6 * 3
        assert len(table.summaries) == 6


def test_training_di_result_threshold_table_must_be_monotone():
    with pytest.raises(ValueError, match="nondecreasing"):
        TrainingDIResult(
            di=np.array([0.5, 0.7]),
            folds=folds_from_labels([0, 1]),
            d_bar=1.0,
            thresholds={0.5: 0.9, 0.95: 0.2},
        )


def test_aoa_mask_consistency_validation():
    geom = GridGeometry(rows=1, cols=2)
    inside = np.array([[True, False]])
    missing = np.array([[True, False]])
    with pytest.raises(ValueError, match="both"):
        AOAMask(inside=inside, missing=missing, geometry=geom, threshold=0.5)
