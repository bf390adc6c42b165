"""Compare the numba and numpy kernel backends on the hot paths.

Runs each kernel in a fresh subprocess per backend (the backend is chosen at
import time via AOAMAP_BACKEND), checks that both produce identical results,
and prints a timing table.

Usage: python3 benchmarks/bench_kernels.py [--quick]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import textwrap

_WORKER = textwrap.dedent("""
    import json, sys, time, warnings
    warnings.filterwarnings("ignore")
    import numpy as np
    from aoamap import kernels

    quick = bool(int(sys.argv[1]))
    rng = np.random.default_rng(42)
    n_train, n_query, p = (300, 4000, 10) if quick else (600, 20000, 10)
    n_rows, n_trees = (200, 100) if quick else (400, 500)

    train = rng.normal(size=(n_train, p))
    queries = rng.normal(size=(n_query, p))
    qf = np.full(n_query, -1, dtype=np.int64)
    tf = rng.integers(0, 10, n_train).astype(np.int64)
    x = rng.normal(size=(n_rows, p))
    y = np.sin(x[:, 0]) + 0.3 * x[:, 1] + 0.1 * rng.normal(size=n_rows)

    def timed(fn, *args, repeat=3):
        fn(*args)  # warm: triggers JIT on the numba backend
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            out = fn(*args)
            best = min(best, time.perf_counter() - t0)
        return best, out

    results = {"backend": kernels.BACKEND}
    t, d = timed(kernels.pairwise_mean_distance, train)
    results["pairwise_mean_distance"] = {"seconds": t, "check": float(d)}
    t, dk = timed(kernels.min_distances, queries, train)
    results["min_distances"] = {"seconds": t, "check": float(dk.sum())}
    t, dk = timed(kernels.min_distances_excluding, queries, train, tf, qf)
    results["min_distances_excluding"] = {"seconds": t, "check": float(dk.sum())}

    def _grow():
        return kernels.grow_forest(x, y, n_trees, 3, 5, 1, 12345)
    t, forest = timed(_grow)
    results["grow_forest"] = {"seconds": t, "check": float(forest[0].sum())}

    features, thresholds, lefts, rights, values, n_nodes, boot = forest
    def _pred():
        return kernels.predict_trees(features, thresholds, lefts, rights, values, queries)
    t, pred = timed(_pred)
    results["predict_trees"] = {"seconds": t, "check": float(pred.mean())}

    def _oob():
        return kernels.oob_permutation_mse(
            features, thresholds, lefts, rights, values, boot, x, y, 99)
    t, (base, perm, sizes) = timed(_oob)
    results["oob_permutation_mse"] = {"seconds": t,
                                      "check": float(np.nansum(perm) + np.nansum(base))}
    print(json.dumps(results))
""")


def run_backend(backend: str, quick: bool) -> dict:
    env = dict(os.environ, AOAMAP_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, "-c", _WORKER, str(int(quick))],
        env=env, capture_output=True, text=True,
    )
    if proc.returncode != 0:
        raise RuntimeError(f"{backend} worker failed:\n{proc.stderr}")
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args()

    print(f"problem scale: {'quick' if args.quick else 'full'}")
    out = {b: run_backend(b, args.quick) for b in ("numpy", "numba")}

    names = [k for k in out["numpy"] if k != "backend"]
    width = max(len(n) for n in names)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}  match")
    mismatch = False
    for name in names:
        a, b = out["numpy"][name], out["numba"][name]
        same = abs(a["check"] - b["check"]) <= 1e-9 * max(1.0, abs(a["check"]))
        mismatch |= not same
        print(f"{name:<{width}}  {a['seconds']:>9.4f}s  {b['seconds']:>9.4f}s  "
              f"{a['seconds'] / b['seconds']:>7.1f}x  {'yes' if same else 'NO'}")
    if mismatch:
        print("RESULT MISMATCH between backends", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
