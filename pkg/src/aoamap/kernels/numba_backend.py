"""numba-compiled kernels: distance scans in weighted predictor space and
CART forest growth/prediction.

Determinism notes:
  - prange loops only ever write disjoint slices, and per-item reductions run
    serially, so results are bit-identical for any thread count.
  - per-tree RNG streams are derived from (seed, tree index), so the parallel
    schedule cannot change a forest.
  - fastmath stays off; accumulation order is fixed and mirrored by the numpy
    backend (sequential sums / prefix sums).
"""

import numpy as np
from numba import njit, prange

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_ONE = np.uint64(1)


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX_A
    z = (z ^ (z >> np.uint64(27))) * _MIX_B
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _next_u64(state):
    state = state + _GOLDEN
    return _mix64(state), state


@njit(cache=True)
def _stream_seed(master, stream):
    return _mix64(master + (stream + _ONE) * _GOLDEN)


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------

@njit(cache=True)
def pairwise_mean_distance(xw):
    """Mean Euclidean distance over all unordered point pairs. Serial on purpose."""
    n, p = xw.shape
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(p):
                d = xw[i, k] - xw[j, k]
                acc += d * d
            total += np.sqrt(acc)
    return total / (n * (n - 1) / 2.0)


@njit(cache=True, parallel=True)
def min_distances(queries, train):
    """Per query, the Euclidean distance to the closest training row."""
    m = queries.shape[0]
    n = train.shape[0]
    p = queries.shape[1]
    out = np.empty(m)
    for i in prange(m):
        best = np.inf
        for j in range(n):
            acc = 0.0
            for k in range(p):
                d = queries[i, k] - train[j, k]
                acc += d * d
            if acc < best:
                best = acc
        out[i] = np.sqrt(best)
    return out


@njit(cache=True, parallel=True)
def min_distances_excluding(queries, train, train_fold, query_fold):
    """Nearest-training distance skipping rows that share the query's fold id.

    A query fold id < 0 disables the exclusion for that query. Queries whose
    exclusion removes every training row get +inf (callers must treat that as
    an error).
    """
    m = queries.shape[0]
    n = train.shape[0]
    p = queries.shape[1]
    out = np.empty(m)
    for i in prange(m):
        qf = query_fold[i]
        best = np.inf
        for j in range(n):
            if qf >= 0 and train_fold[j] == qf:
                continue
            acc = 0.0
            for k in range(p):
                d = queries[i, k] - train[j, k]
                acc += d * d
            if acc < best:
                best = acc
        out[i] = np.sqrt(best)
    return out


# ---------------------------------------------------------------------------
# regression forest
# ---------------------------------------------------------------------------

def grow_forest(x, y, n_trees, mtry, min_node_size, bootstrap, seed):
    """Grow a bagged CART regression forest.

    Per tree: n bootstrap draws with replacement (or the identity sample when
    bootstrap == 0), then greedy SSE-reduction splits over `mtry` randomly
    chosen predictors per node. Split candidates are midpoints between
    consecutive distinct sorted values; ties prefer the lower predictor index,
    then the lower split value. A node becomes a leaf when it holds fewer than
    2*min_node_size rows, has (numerically) zero response variance, or no
    candidate split improves the SSE.

    Returns padded per-tree node arrays plus bootstrap multiplicities.
    """
    # seeds can exceed int64 range; cast here so dispatch types them uint64
    return _grow_forest(x, y, n_trees, mtry, min_node_size, bootstrap, np.uint64(seed))


@njit(cache=True, parallel=True)
def _grow_forest(x, y, n_trees, mtry, min_node_size, bootstrap, seed):
    n, p = x.shape
    max_nodes = 2 * n + 1
    features = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    thresholds = np.zeros((n_trees, max_nodes), dtype=np.float64)
    lefts = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    rights = np.full((n_trees, max_nodes), -1, dtype=np.int32)
    values = np.zeros((n_trees, max_nodes), dtype=np.float64)
    n_nodes = np.zeros(n_trees, dtype=np.int64)
    boot_counts = np.zeros((n_trees, n), dtype=np.int32)

    for t in prange(n_trees):
        state = _stream_seed(seed, np.uint64(t))
        idx = np.empty(n, dtype=np.int64)
        if bootstrap != 0:
            for i in range(n):
                v, state = _next_u64(state)
                r = np.int64(v % np.uint64(n))
                idx[i] = r
                boot_counts[t, r] += 1
        else:
            for i in range(n):
                idx[i] = i
                boot_counts[t, i] += 1

        tmp = np.empty(n, dtype=np.int64)
        xv = np.empty(n, dtype=np.float64)
        perm = np.empty(p, dtype=np.int64)
        stack_node = np.empty(max_nodes + 2, dtype=np.int64)
        stack_lo = np.empty(max_nodes + 2, dtype=np.int64)
        stack_hi = np.empty(max_nodes + 2, dtype=np.int64)

        stack_node[0] = 0
        stack_lo[0] = 0
        stack_hi[0] = n
        sp = 1
        n_out = 1

        while sp > 0:
            sp -= 1
            node = stack_node[sp]
            lo = stack_lo[sp]
            hi = stack_hi[sp]
            m = hi - lo

            s_tot = 0.0
            ss_tot = 0.0
            for u in range(lo, hi):
                yy = y[idx[u]]
                s_tot += yy
                ss_tot += yy * yy
            values[t, node] = s_tot / m
            sse = ss_tot - s_tot * s_tot / m
            if m < 2 * min_node_size or sse <= 1e-12 * max(ss_tot, 1e-300):
                continue

            for j in range(p):
                perm[j] = j
            k_try = mtry if mtry < p else p

            best_gain = 0.0
            best_f = -1
            best_thr = 0.0
            for c in range(k_try):
                v, state = _next_u64(state)
                j = c + np.int64(v % np.uint64(p - c))
                pj = perm[c]
                perm[c] = perm[j]
                perm[j] = pj
                f = perm[c]

                for u in range(m):
                    xv[u] = x[idx[lo + u], f]
                order = np.argsort(xv[:m])

                csum = 0.0
                for u in range(m - 1):
                    csum += y[idx[lo + order[u]]]
                    cur = xv[order[u]]
                    nxt = xv[order[u + 1]]
                    if nxt > cur:
                        n_l = u + 1
                        n_r = m - n_l
                        s_l = csum
                        s_r = s_tot - s_l
                        gain = s_l * s_l / n_l + s_r * s_r / n_r - s_tot * s_tot / m
                        thr = 0.5 * (cur + nxt)
                        if not (thr < nxt):
                            thr = cur  # adjacent floats: snap to the lower value
                        if gain > best_gain or (
                            gain == best_gain
                            and best_f >= 0
                            and (f < best_f or (f == best_f and thr < best_thr))
                        ):
                            best_gain = gain
                            best_f = f
                            best_thr = thr

            if best_f < 0:
                continue

            # stable partition of idx[lo:hi] on x[., best_f] <= best_thr
            nl = 0
            for u in range(m):
                if x[idx[lo + u], best_f] <= best_thr:
                    tmp[nl] = idx[lo + u]
                    nl += 1
            nr = nl
            for u in range(m):
                if not (x[idx[lo + u], best_f] <= best_thr):
                    tmp[nr] = idx[lo + u]
                    nr += 1
            for u in range(m):
                idx[lo + u] = tmp[u]

            left_id = n_out
            right_id = n_out + 1
            n_out += 2
            features[t, node] = best_f
            thresholds[t, node] = best_thr
            lefts[t, node] = left_id
            rights[t, node] = right_id
            stack_node[sp] = right_id
            stack_lo[sp] = lo + nl
            stack_hi[sp] = hi
            sp += 1
            stack_node[sp] = left_id
            stack_lo[sp] = lo
            stack_hi[sp] = lo + nl
            sp += 1

        n_nodes[t] = n_out

    return features, thresholds, lefts, rights, values, n_nodes, boot_counts


@njit(cache=True, parallel=True)
def predict_trees(features, thresholds, lefts, rights, values, xq):
    """Per-tree predictions, shape (n_trees, n_points)."""
    n_trees = features.shape[0]
    m = xq.shape[0]
    out = np.empty((n_trees, m))
    for t in prange(n_trees):
        for i in range(m):
            nd = 0
            f = features[t, nd]
            while f >= 0:
                if xq[i, f] <= thresholds[t, nd]:
                    nd = lefts[t, nd]
                else:
                    nd = rights[t, nd]
                f = features[t, nd]
            out[t, i] = values[t, nd]
    return out


def oob_permutation_mse(features, thresholds, lefts, rights, values, boot_counts, x, y, seed):
    """Out-of-bag MSE per tree, baseline and with one column permuted.

    Returns (mse_base, mse_perm, oob_sizes); trees without OOB rows yield NaN.
    """
    return _oob_permutation_mse(
        features, thresholds, lefts, rights, values, boot_counts, x, y, np.uint64(seed)
    )


@njit(cache=True, parallel=True)
def _oob_permutation_mse(features, thresholds, lefts, rights, values, boot_counts, x, y, seed):
    n_trees = features.shape[0]
    n, p = x.shape
    mse_base = np.full(n_trees, np.nan)
    mse_perm = np.full((n_trees, p), np.nan)
    oob_sizes = np.zeros(n_trees, dtype=np.int64)

    for t in prange(n_trees):
        oob = np.empty(n, dtype=np.int64)
        m = 0
        for r in range(n):
            if boot_counts[t, r] == 0:
                oob[m] = r
                m += 1
        oob_sizes[t] = m
        if m == 0:
            continue

        acc = 0.0
        for u in range(m):
            i = oob[u]
            nd = 0
            f = features[t, nd]
            while f >= 0:
                if x[i, f] <= thresholds[t, nd]:
                    nd = lefts[t, nd]
                else:
                    nd = rights[t, nd]
                f = features[t, nd]
            e = values[t, nd] - y[i]
            acc += e * e
        mse_base[t] = acc / m

        state = _stream_seed(seed, np.uint64(t))
        shuf = np.empty(m, dtype=np.int64)
        for j in range(p):
            for u in range(m):
                shuf[u] = u
            for u in range(m - 1, 0, -1):
                v, state = _next_u64(state)
                w = np.int64(v % np.uint64(u + 1))
                sv = shuf[u]
                shuf[u] = shuf[w]
                shuf[w] = sv
            acc = 0.0
            for u in range(m):
                i = oob[u]
                xj = x[oob[shuf[u]], j]
                nd = 0
                f = features[t, nd]
                while f >= 0:
                    if f == j:
                        xval = xj
                    else:
                        xval = x[i, f]
                    if xval <= thresholds[t, nd]:
                        nd = lefts[t, nd]
                    else:
                        nd = rights[t, nd]
                    f = features[t, nd]
                e = values[t, nd] - y[i]
                acc += e * e
            mse_perm[t, j] = acc / m

    return mse_base, mse_perm, oob_sizes
