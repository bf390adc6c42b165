"""Pure-numpy kernels, drop-in replacements for the numba backend.

Consumes the same splitmix64 streams and accumulates sums in the same
sequential order (np.cumsum), so forests grown here match the numba backend
bit-for-bit whenever feature values are distinct within a node. Distance
reductions may differ from the numba loops in the last few ulps because the
vectorized sums associate differently.
"""

import numpy as np

from .rng import next_u64, stream_seed

_CHUNK = 256


def pairwise_mean_distance(xw):
    """Mean Euclidean distance over all unordered point pairs."""
    n = xw.shape[0]
    total = 0.0
    for i in range(n - 1):
        d = xw[i + 1:] - xw[i]
        total += float(np.sqrt(np.einsum("ij,ij->i", d, d)).sum())
    return total / (n * (n - 1) / 2.0)


def min_distances(queries, train):
    """Per query, the Euclidean distance to the closest training row."""
    m = queries.shape[0]
    out = np.empty(m)
    for s in range(0, m, _CHUNK):
        q = queries[s:s + _CHUNK]
        d2 = np.sum((q[:, None, :] - train[None, :, :]) ** 2, axis=2)
        out[s:s + _CHUNK] = np.sqrt(d2.min(axis=1))
    return out


def min_distances_excluding(queries, train, train_fold, query_fold):
    """Nearest-training distance skipping rows that share the query's fold id.

    A query fold id < 0 disables the exclusion for that query. Queries whose
    exclusion removes every training row get +inf (callers must treat that as
    an error).
    """
    m = queries.shape[0]
    out = np.empty(m)
    for s in range(0, m, _CHUNK):
        q = queries[s:s + _CHUNK]
        qf = query_fold[s:s + _CHUNK]
        d2 = np.sum((q[:, None, :] - train[None, :, :]) ** 2, axis=2)
        excluded = (qf[:, None] >= 0) & (train_fold[None, :] == qf[:, None])
        d2[excluded] = np.inf
        out[s:s + _CHUNK] = np.sqrt(d2.min(axis=1))
    return out


def grow_forest(x, y, n_trees, mtry, min_node_size, bootstrap, seed):
    """Grow a bagged CART regression forest; see the numba backend docstring.

    Trees are built one at a time in Python with vectorized split scans; node
    visitation order, RNG consumption, and prefix-sum accumulation all mirror
    the compiled kernel.
    """
    n, p = x.shape
    max_nodes = 2 * n + 1
    features = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    thresholds = np.zeros((n_trees, max_nodes), dtype=np.float64)
    lefts = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    rights = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    values = np.zeros((n_trees, max_nodes), dtype=np.float64)
    n_nodes = np.zeros(n_trees, dtype=np.int64)
    boot_counts = np.zeros((n_trees, n), dtype=np.int32)

    k_try = min(mtry, p)
    for t in range(n_trees):
        state = stream_seed(seed, t)
        idx = np.empty(n, dtype=np.int64)
        if bootstrap:
            for i in range(n):
                v, state = next_u64(state)
                r = v % n
                idx[i] = r
                boot_counts[t, r] += 1
        else:
            idx[:] = np.arange(n)
            boot_counts[t, :] = 1

        perm = np.arange(p)
        stack = [(0, 0, n)]
        n_out = 1
        while stack:
            node, lo, hi = stack.pop()
            m = hi - lo
            ysub = y[idx[lo:hi]]
            s_tot = float(np.cumsum(ysub)[-1])
            ss_tot = float(np.cumsum(ysub * ysub)[-1])
            values[t, node] = s_tot / m
            sse = ss_tot - s_tot * s_tot / m
            if m < 2 * min_node_size or sse <= 1e-12 * max(ss_tot, 1e-300):
                continue

            perm[:] = np.arange(p)
            best_gain = 0.0
            best_f = -1
            best_thr = 0.0
            for c in range(k_try):
                v, state = next_u64(state)
                j = c + v % (p - c)
                perm[c], perm[j] = perm[j], perm[c]
                f = int(perm[c])

                xv = x[idx[lo:hi], f]
                order = np.argsort(xv, kind="quicksort")
                xs = xv[order]
                distinct = np.nonzero(xs[1:] > xs[:-1])[0]
                if distinct.size == 0:
                    continue
                csum = np.cumsum(ysub[order])
                n_l = distinct + 1
                n_r = m - n_l
                s_l = csum[distinct]
                s_r = s_tot - s_l
                gain = s_l * s_l / n_l + s_r * s_r / n_r - s_tot * s_tot / m
                thr = 0.5 * (xs[distinct] + xs[n_l])
                snap = ~(thr < xs[n_l])  # adjacent floats: snap to the lower value
                thr[snap] = xs[distinct][snap]

                b = int(np.argmax(gain))
                g = float(gain[b])
                tb = float(thr[b])
                if g > best_gain or (
                    g == best_gain
                    and best_f >= 0
                    and (f < best_f or (f == best_f and tb < best_thr))
                ):
                    best_gain = g
                    best_f = f
                    best_thr = tb

            if best_f < 0:
                continue

            sub = idx[lo:hi]
            go_left = x[sub, best_f] <= best_thr
            left_rows = sub[go_left]
            nl = left_rows.size
            right_rows = sub[~go_left]
            idx[lo:lo + nl] = left_rows
            idx[lo + nl:hi] = right_rows

            left_id = n_out
            right_id = n_out + 1
            n_out += 2
            features[t, node] = best_f
            thresholds[t, node] = best_thr
            lefts[t, node] = left_id
            rights[t, node] = right_id
            stack.append((right_id, lo + nl, hi))
            stack.append((left_id, lo, lo + nl))

        n_nodes[t] = n_out

    return features, thresholds, lefts, rights, values, n_nodes, boot_counts


def _walk_tree(features, thresholds, lefts, rights, xq):
    """Leaf node index for every row of xq in a single tree."""
    nd = np.zeros(xq.shape[0], dtype=np.int64)
    active = np.nonzero(features[nd] >= 0)[0]
    while active.size:
        nda = nd[active]
        fa = features[nda].astype(np.int64)
        go_left = xq[active, fa] <= thresholds[nda]
        nxt = np.where(go_left, lefts[nda], rights[nda]).astype(np.int64)
        nd[active] = nxt
        active = active[features[nxt] >= 0]
    return nd


def predict_trees(features, thresholds, lefts, rights, values, xq):
    """Per-tree predictions, shape (n_trees, n_points)."""
    n_trees = features.shape[0]
    out = np.empty((n_trees, xq.shape[0]))
    for t in range(n_trees):
        nd = _walk_tree(features[t], thresholds[t], lefts[t], rights[t], xq)
        out[t] = values[t, nd]
    return out


def oob_permutation_mse(features, thresholds, lefts, rights, values, boot_counts, x, y, seed):
    """Out-of-bag MSE per tree, baseline and with one column permuted.

    Returns (mse_base, mse_perm, oob_sizes); trees without OOB rows yield NaN.
    """
    n_trees = features.shape[0]
    n, p = x.shape
    mse_base = np.full(n_trees, np.nan)
    mse_perm = np.full((n_trees, p), np.nan)
    oob_sizes = np.zeros(n_trees, dtype=np.int64)

    for t in range(n_trees):
        oob = np.nonzero(boot_counts[t] == 0)[0]
        m = oob.size
        oob_sizes[t] = m
        if m == 0:
            continue
        xq = x[oob]
        nd = _walk_tree(features[t], thresholds[t], lefts[t], rights[t], xq)
        err = values[t, nd] - y[oob]
        mse_base[t] = float(np.cumsum(err * err)[-1]) / m

        state = stream_seed(seed, t)
        shuf = np.empty(m, dtype=np.int64)
        for j in range(p):
            shuf[:] = np.arange(m)
            for u in range(m - 1, 0, -1):
                v, state = next_u64(state)
                w = v % (u + 1)
                shuf[u], shuf[w] = shuf[w], shuf[u]
            xq_mod = xq.copy()
            xq_mod[:, j] = xq[shuf, j]
            nd = _walk_tree(features[t], thresholds[t], lefts[t], rights[t], xq_mod)
            err = values[t, nd] - y[oob]
            mse_perm[t, j] = float(np.cumsum(err * err)[-1]) / m

    return mse_base, mse_perm, oob_sizes
