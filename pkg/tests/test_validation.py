import numpy as np
import pytest

from aoamap.forest import ForestConfig
from aoamap.validation import (
    FoldAssignment,
    assign_cluster_folds,
    assign_random_folds,
    cross_validate,
    folds_from_labels,
    pearson_r,
    r_squared,
    rmse,
)

from conftest import make_table


class TestAssignRandomFolds:
    def test_k_equals_n_is_loo(self):
        f = assign_random_folds(10, 10, seed=0)
        assert f.k == 10
        assert sorted(f.sizes) == [1] * 10

    def test_balanced_sizes(self):
        f = assign_random_folds(10, 3, seed=1)
        assert sorted(f.sizes, reverse=True) == [4, 3, 3]

    def test_deterministic(self):
        a = assign_random_folds(40, 7, seed=99)
        b = assign_random_folds(40, 7, seed=99)
        assert np.array_equal(a.fold, b.fold)

    def test_seed_changes_partition(self):
        a = assign_random_folds(40, 7, seed=1)
        b = assign_random_folds(40, 7, seed=2)
        assert not np.array_equal(a.fold, b.fold)

    def test_partition_properties(self):
        f = assign_random_folds(23, 4, seed=5)
        assert len(f) == 23
        assert f.fold.min() == 0 and f.fold.max() == 3
        assert f.sizes.sum() == 23
        assert (f.sizes > 0).all()

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            assign_random_folds(5, 1, seed=0)
        with pytest.raises(ValueError):
            assign_random_folds(5, 6, seed=0)


class TestAssignClusterFolds:
    def test_fifty_clusters_of_ten(self):
        ids = np.repeat(np.arange(50), 10)
        f = assign_cluster_folds(ids)
        assert f.k == 50
        assert (f.sizes == 10).all()

    def test_each_row_own_cluster_is_loo(self):
        f = assign_cluster_folds(np.arange(8))
        assert f.k == 8
        assert (f.sizes == 1).all()

    def test_rows_partitioned_by_label(self):
        ids = np.array([5, 2, 5, 9, 2, 9, 9])
        f = assign_cluster_folds(ids)
        for label in np.unique(ids):
            rows = np.nonzero(ids == label)[0]
            assert len(set(f.fold[rows])) == 1
        assert f.k == 3

    def test_single_cluster_rejected(self):
        with pytest.raises(ValueError, match="2 distinct"):
            assign_cluster_folds(np.zeros(5))

    def test_noninteger_labels_accepted(self):
        f = assign_cluster_folds(np.array(["a", "b", "a", "c"]))
        assert f.k == 3


class TestFoldsFromLabels:
    def test_renumbering(self):
        f = folds_from_labels([30, 10, 30, 20])
        assert np.array_equal(f.fold, [2, 0, 2, 1])
        assert f.strategy == "file"

    def test_single_label_rejected(self):
        with pytest.raises(ValueError):
            folds_from_labels([1, 1, 1])


class TestFoldAssignmentValidation:
    def test_empty_fold_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            FoldAssignment(fold=np.array([0, 0, 2]), k=3, strategy="random")

    def test_k_below_two_rejected(self):
        with pytest.raises(ValueError):
            FoldAssignment(fold=np.zeros(3, dtype=np.int64), k=1, strategy="random")


def autocorrelated_clustered_table(rng, n_clusters=12, per_cluster=8):
    """Smooth 1-D spatial signal sampled in tight clusters, so random folds
    see near-duplicates across train/test while cluster folds do not."""
    centers = rng.uniform(0, 100, n_clusters)
    x = (centers[:, None] + rng.normal(0, 0.3, (n_clusters, per_cluster))).ravel()
    y = np.sin(0.3 * x) + 0.05 * rng.normal(size=x.size)
    cluster = np.repeat(np.arange(n_clusters), per_cluster)
    return make_table(x[:, None], response=y, cluster=cluster)


class TestCrossValidate:
    def test_leakage_gives_near_zero_rmse(self, rng):
        y = rng.uniform(0, 1, 60)
        x = np.column_stack([y, rng.normal(size=60)])
        t = make_table(x, response=y)
        folds = assign_random_folds(60, 5, seed=1)
        rep = cross_validate(t, folds, ForestConfig(n_trees=100, mtry=2, min_node_size=1, seed=2))
        assert rep.rmse_pooled < 0.05

    def test_cluster_cv_harder_than_random(self, rng):
        t = autocorrelated_clustered_table(rng)
        cfg = ForestConfig(n_trees=100, seed=3)
        random_rep = cross_validate(t, assign_random_folds(len(t), 10, seed=4), cfg)
        cluster_rep = cross_validate(t, assign_cluster_folds(t.cluster), cfg)
        assert cluster_rep.cv_rmse > random_rep.cv_rmse

    def test_pooled_predictions_cover_every_row_once(self, rng):
        t = make_table(rng.normal(size=(30, 2)), response=rng.normal(size=30))
        folds = assign_random_folds(30, 4, seed=7)
        rep = cross_validate(t, folds, ForestConfig(n_trees=10, seed=1))
        assert rep.predictions.shape == (30,)
        assert np.isfinite(rep.predictions).all()

    def test_deterministic(self, rng):
        t = make_table(rng.normal(size=(40, 2)), response=rng.normal(size=40))
        folds = assign_random_folds(40, 5, seed=2)
        cfg = ForestConfig(n_trees=15, seed=9)
        a = cross_validate(t, folds, cfg)
        b = cross_validate(t, folds, cfg)
        assert np.array_equal(a.predictions, b.predictions)
        assert a.cv_rmse == b.cv_rmse

    def test_report_consistency(self, rng):
        t = make_table(rng.normal(size=(24, 2)), response=rng.normal(size=24))
        folds = assign_random_folds(24, 3, seed=3)
        rep = cross_validate(t, folds, ForestConfig(n_trees=10, seed=4))
        assert rep.fold_rmse.shape == (3,)
        assert rep.rmse_fold_mean == pytest.approx(rep.fold_rmse.mean())
        assert rep.rmse_pooled == pytest.approx(rmse(rep.predictions, t.response))
        assert rep.r_squared == pytest.approx(rep.pearson_r**2)
        assert rep.cv_rmse == rep.rmse_fold_mean

    def test_fold_count_mismatch(self, rng):
        t = make_table(rng.normal(size=(10, 1)), response=rng.normal(size=10))
        with pytest.raises(ValueError, match="match"):
            cross_validate(t, assign_random_folds(9, 3, seed=0), ForestConfig(n_trees=2))


class TestMetrics:
    def test_perfect_prediction(self):
        y = np.array([1.0, 2.0, 5.0])
        assert rmse(y, y) == 0.0
        assert pearson_r(y, y) == pytest.approx(1.0)
        assert r_squared(y, y) == pytest.approx(1.0)

    def test_rmse_analytic(self):
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(3.5355339059327378)

    def test_anticorrelation(self):
        y = np.array([1.0, 2.0, 3.5])
        assert pearson_r(-y, y) == pytest.approx(-1.0)
        assert r_squared(-y, y) == pytest.approx(1.0)

    def test_rmse_symmetry(self, rng):
        a, b = rng.normal(size=20), rng.normal(size=20)
        assert rmse(a, b) == rmse(b, a)

    def test_pearson_affine_invariance(self, rng):
        a, b = rng.normal(size=25), rng.normal(size=25)
        assert pearson_r(3.0 * a + 7.0, b) == pytest.approx(pearson_r(a, b), abs=1e-12)

    def test_full_mask_equals_unmasked(self, rng):
        a, b = rng.normal(size=15), rng.normal(size=15)
        assert rmse(a, b, mask=np.ones(15, dtype=bool)) == rmse(a, b)

    def test_mask_selects_subset(self):
        pred = np.array([0.0, 10.0, 0.0])
        truth = np.array([0.0, 0.0, 0.0])
        mask = np.array([True, False, True])
        assert rmse(pred, truth, mask) == 0.0

    def test_empty_selection_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            rmse(np.array([1.0]), np.array([1.0]), mask=np.array([False]))

    def test_zero_variance_correlation_rejected(self):
        with pytest.raises(ValueError, match="variance"):
            pearson_r([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_single_pair_correlation_rejected(self):
        with pytest.raises(ValueError, match="2 pairs"):
            pearson_r([1.0], [2.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            rmse([1.0, 2.0], [1.0])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            rmse([np.nan, 1.0], [0.0, 1.0])
