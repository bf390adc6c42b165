"""Numba and numpy kernel backends must agree.

Trees are compared bit-for-bit: both backends consume identical RNG streams
and scan splits in the same order, so on data without duplicated feature
values every node matches exactly. Distance kernels may differ only by
floating-point association in their sums.
"""

import subprocess
import sys
import textwrap

import numpy as np
import pytest

from aoamap.kernels import numpy_backend

numba_backend = pytest.importorskip(
    "aoamap.kernels.numba_backend", reason="numba unavailable"
)

BACKENDS = (numpy_backend, numba_backend)


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(42)
    x = np.ascontiguousarray(rng.normal(size=(60, 5)))
    y = np.ascontiguousarray(np.sin(x[:, 0]) + 0.3 * rng.normal(size=60))
    queries = np.ascontiguousarray(rng.normal(size=(150, 5)))
    return x, y, queries


class TestDistanceKernels:
    def test_pairwise_mean_distance(self, data):
        x, _, _ = data
        a = numpy_backend.pairwise_mean_distance(x)
        b = numba_backend.pairwise_mean_distance(x)
        assert a == pytest.approx(b, rel=1e-9)

    def test_min_distances(self, data):
        x, _, queries = data
        a = numpy_backend.min_distances(queries, x)
        b = numba_backend.min_distances(queries, x)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=0)

    def test_min_distances_excluding(self, data):
        x, _, _ = data
        fold = np.ascontiguousarray(np.arange(len(x)) % 4, dtype=np.int64)
        a = numpy_backend.min_distances_excluding(x, x, fold, fold)
        b = numba_backend.min_distances_excluding(x, x, fold, fold)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=0)
        # excluding own fold keeps every row strictly positive here
        assert np.all(a > 0)


def grow(backend, x, y, **kw):
    args = dict(n_trees=25, mtry=2, min_node_size=5, bootstrap=True, seed=99)
    args.update(kw)
    return backend.grow_forest(x, y, **args)


class TestForestKernels:
    def test_trees_bit_identical(self, data):
        x, y, _ = data
        a = grow(numpy_backend, x, y)
        b = grow(numba_backend, x, y)
        names = ("features", "thresholds", "lefts", "rights", "values",
                 "n_nodes", "boot_counts")
        for name, av, bv in zip(names, a, b):
            assert np.array_equal(av, bv), f"{name} differs between backends"

    def test_no_bootstrap_trees_match_too(self, data):
        x, y, _ = data
        a = grow(numpy_backend, x, y, bootstrap=False, n_trees=5)
        b = grow(numba_backend, x, y, bootstrap=False, n_trees=5)
        for av, bv in zip(a, b):
            assert np.array_equal(av, bv)

    def test_predictions_bit_identical(self, data):
        x, y, queries = data
        features, thresholds, lefts, rights, values, _, _ = grow(numpy_backend, x, y)
        a = numpy_backend.predict_trees(features, thresholds, lefts, rights, values, queries)
        b = numba_backend.predict_trees(features, thresholds, lefts, rights, values, queries)
        assert np.array_equal(a, b)

    def test_oob_permutation_mse_matches(self, data):
        x, y, _ = data
        features, thresholds, lefts, rights, values, _, boot_counts = grow(numpy_backend, x, y)
        a_base, a_perm, a_n = numpy_backend.oob_permutation_mse(
            features, thresholds, lefts, rights, values, boot_counts, x, y, 7)
        b_base, b_perm, b_n = numba_backend.oob_permutation_mse(
            features, thresholds, lefts, rights, values, boot_counts, x, y, 7)
        assert np.array_equal(a_n, b_n)
        np.testing.assert_allclose(a_base, b_base, rtol=1e-12)
        np.testing.assert_allclose(a_perm, b_perm, rtol=1e-12)


class TestThreadCounts:
    """Compiled kernels must not let the thread schedule leak into results."""

    def test_forest_and_distances_thread_invariant(self, data):
        import numba

        x, y, queries = data
        results = []
        for n in (1, 2):
            numba.set_num_threads(n)
            trees = grow(numba_backend, x, y)
            dmin = numba_backend.min_distances(queries, x)
            results.append((trees, dmin))
        numba.set_num_threads(2)
        (trees1, d1), (trees2, d2) = results
        for av, bv in zip(trees1, trees2):
            assert np.array_equal(av, bv)
        assert np.array_equal(d1, d2)


class TestBackendFlag:
    def test_env_var_selects_numpy(self, data, tmp_path):
        """AOAMAP_BACKEND=numpy must produce the same DI end to end."""
        from aoamap import predictor_space as ps
        from conftest import make_table

        rng = np.random.default_rng(3)
        x = rng.normal(size=(20, 3))
        q = rng.normal(size=(30, 3))
        table = make_table(x, response=x[:, 0])
        params = ps.fit_standardizer(table)
        weights = ps.ImportanceWeights.uniform(params.names)
        here = ps.dissimilarity_index(q, table, params, weights)

        script = textwrap.dedent("""
            import numpy as np
            from aoamap import kernels
            assert kernels.BACKEND == "numpy", kernels.BACKEND
            from aoamap import predictor_space as ps
            from conftest import make_table
            rng = np.random.default_rng(3)
            x = rng.normal(size=(20, 3))
            q = rng.normal(size=(30, 3))
            table = make_table(x, response=x[:, 0])
            params = ps.fit_standardizer(table)
            weights = ps.ImportanceWeights.uniform(params.names)
            for v in ps.dissimilarity_index(q, table, params, weights):
                print(repr(float(v)))
        """)
        path = tmp_path / "numpy_di.py"
        path.write_text(script)
        import os
        env = dict(os.environ, AOAMAP_BACKEND="numpy", PYTHONPATH="tests")
        proc = subprocess.run(
            [sys.executable, str(path)], capture_output=True, text=True,
            timeout=300, env=env, cwd="/root/pkg",
        )
        assert proc.returncode == 0, proc.stderr
        other = np.array([float(line) for line in proc.stdout.split()])
        np.testing.assert_allclose(other, here, rtol=1e-9)
