"""Compiled inner loops for tree growth, prediction and partial dependence.

Trees are stored as padded node arrays. Node 0 is the root; a node is a
leaf when its split variable is -1. Rows with ``x < threshold`` go left.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _scan_node(ids, rs, uvals, start, end, total, min_node):
    """Best split of one node whose rows occupy ``[start, end)`` of every
    feature's sorted segment arrays.

    ``ids[f, k]`` is the dense rank of the row's value among column f's
    distinct values ``uvals[f]``. Candidate thresholds are midpoints between
    consecutive distinct values; a candidate replaces the incumbent only on
    strictly larger improvement, so ties resolve to the lower column, then
    the lower threshold.
    """
    p = ids.shape[0]
    N = end - start
    best_imp = 0.0
    best_var = -1
    best_thr = 0.0
    if N < 2 * min_node:
        return best_imp, best_var, best_thr
    # improvement = (s_left * N - total * c)^2 / (c * (N - c) * N); candidates
    # are compared as cross-multiplied fractions to keep division out of the loop.
    best_num = 0.0
    best_den = 1.0
    for f in range(p):
        c = 0
        s_left = 0.0
        prev = -1
        at = -1
        for k in range(start, end):
            cur = ids[f, k]
            if c >= min_node and N - c >= min_node and cur > prev:
                d = s_left * N - total * c
                num = d * d
                den = float(c) * float(N - c)
                if num * best_den > best_num * den:
                    best_num = num
                    best_den = den
                    at = k
            c += 1
            s_left += rs[f, k]
            prev = cur
        if at >= 0:
            best_var = f
            best_thr = 0.5 * (uvals[f, ids[f, at - 1]] + uvals[f, ids[f, at]])
    if best_var >= 0:
        best_imp = best_num / best_den / N
    return best_imp, best_var, best_thr


@njit(cache=True)
def grow_tree(ids_sorted, order, uvals, r, inbag, max_splits, min_node,
              rows, ids, rs, goes_left, buf_i, buf_d, buf_r):
    """Best-first least-squares tree with at most ``max_splits`` splits.

    ``order[f]`` lists row indices by ascending column f and
    ``ids_sorted[f]`` the matching dense value ranks into ``uvals[f]``.
    Only rows flagged in ``inbag`` take part. ``rows``, ``ids``, ``rs``
    (p x n), ``goes_left`` (n) and the three length-n buffers are scratch
    space. Returns padded node arrays
    (split_var, threshold, left, right, improvement, value, count).
    """
    p, n = order.shape
    M = 2 * max_splits + 1
    split_var = np.full(M, -1, dtype=np.int64)
    threshold = np.zeros(M)
    left = np.full(M, -1, dtype=np.int64)
    right = np.full(M, -1, dtype=np.int64)
    improvement = np.zeros(M)
    value = np.zeros(M)
    count = np.zeros(M, dtype=np.int64)
    node_sum = np.zeros(M)
    seg_start = np.zeros(M, dtype=np.int64)
    seg_end = np.zeros(M, dtype=np.int64)
    cand_imp = np.zeros(M)
    cand_var = np.full(M, -1, dtype=np.int64)
    cand_thr = np.zeros(M)

    nb = 0
    for f in range(p):
        k = 0
        for idx in range(n):
            # Branch-free: the bag mask is random, so a branch mispredicts half the time.
            row = order[f, idx]
            rows[f, k] = row
            ids[f, k] = ids_sorted[f, idx]
            rs[f, k] = r[row]
            k += inbag[row]
        nb = k
    total = 0.0
    for k in range(nb):
        total += rs[0, k]
    seg_end[0] = nb
    count[0] = nb
    node_sum[0] = total
    if nb > 0:
        cand_imp[0], cand_var[0], cand_thr[0] = _scan_node(ids, rs, uvals, 0, nb, total, min_node)

    n_nodes = 1
    splits = 0
    while splits < max_splits:
        best = -1
        best_gain = 0.0
        for nd in range(n_nodes):
            if split_var[nd] == -1 and cand_var[nd] >= 0 and cand_imp[nd] > best_gain:
                best_gain = cand_imp[nd]
                best = nd
        if best < 0:
            break
        fb = cand_var[best]
        thr = cand_thr[best]
        start = seg_start[best]
        end = seg_end[best]
        n_left = 0
        s_left = 0.0
        for k in range(start, end):
            g = np.uint8(uvals[fb, ids[fb, k]] < thr)
            goes_left[rows[fb, k]] = g
            n_left += g
            s_left += g * rs[fb, k]
        lo = n_nodes
        hi = n_nodes + 1
        n_nodes += 2
        split_var[best] = fb
        threshold[best] = thr
        left[best] = lo
        right[best] = hi
        improvement[best] = cand_imp[best]
        seg_start[lo] = start
        seg_end[lo] = start + n_left
        seg_start[hi] = start + n_left
        seg_end[hi] = end
        count[lo] = n_left
        count[hi] = end - start - n_left
        node_sum[lo] = s_left
        node_sum[hi] = node_sum[best] - s_left
        splits += 1
        if splits == max_splits:
            break
        for f in range(p):
            a = start
            b = 0
            for k in range(start, end):
                row = rows[f, k]
                d = ids[f, k]
                rr = rs[f, k]
                g = goes_left[row]
                rows[f, a] = row
                ids[f, a] = d
                rs[f, a] = rr
                buf_i[b] = row
                buf_d[b] = d
                buf_r[b] = rr
                a += g
                b += 1 - g
            for q in range(b):
                rows[f, a + q] = buf_i[q]
                ids[f, a + q] = buf_d[q]
                rs[f, a + q] = buf_r[q]
        cand_imp[lo], cand_var[lo], cand_thr[lo] = _scan_node(
            ids, rs, uvals, start, start + n_left, node_sum[lo], min_node)
        cand_imp[hi], cand_var[hi], cand_thr[hi] = _scan_node(
            ids, rs, uvals, start + n_left, end, node_sum[hi], min_node)

    for nd in range(n_nodes):
        if count[nd] > 0:
            value[nd] = node_sum[nd] / count[nd]
    return split_var, threshold, left, right, improvement, value, count


@njit(cache=True)
def dense_ranks(Xs):
    """Per-column dense ranks of the sorted values and the distinct values."""
    p, n = Xs.shape
    ids = np.empty((p, n), dtype=np.int32)
    uvals = np.zeros((p, n))
    for f in range(p):
        d = 0
        uvals[f, 0] = Xs[f, 0]
        for idx in range(n):
            if idx > 0 and Xs[f, idx] > Xs[f, idx - 1]:
                d += 1
                uvals[f, d] = Xs[f, idx]
            ids[f, idx] = d
    return ids, uvals


@njit(cache=True)
def _leaf_value(X, i, sv, thr, lch, rch, val, t):
    nd = 0
    while sv[t, nd] >= 0:
        if X[i, sv[t, nd]] < thr[t, nd]:
            nd = lch[t, nd]
        else:
            nd = rch[t, nd]
    return val[t, nd]


@njit(cache=True)
def _leaf_value_override(X, i, sv, thr, lch, rch, val, t, j, v):
    nd = 0
    while sv[t, nd] >= 0:
        f = sv[t, nd]
        x = v if f == j else X[i, f]
        if x < thr[t, nd]:
            nd = lch[t, nd]
        else:
            nd = rch[t, nd]
    return val[t, nd]


@njit(cache=True)
def _leaf_value_override2(X, i, sv, thr, lch, rch, val, t, ja, va, jb, vb):
    nd = 0
    while sv[t, nd] >= 0:
        f = sv[t, nd]
        if f == ja:
            x = va
        elif f == jb:
            x = vb
        else:
            x = X[i, f]
        if x < thr[t, nd]:
            nd = lch[t, nd]
        else:
            nd = rch[t, nd]
    return val[t, nd]


@njit(cache=True)
def predict_one_tree(X, sv, thr, lch, rch, val, t):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = _leaf_value(X, i, sv, thr, lch, rch, val, t)
    return out


@njit(cache=True)
def predict_sum(X, sv, thr, lch, rch, val, n_trees):
    """Per-row sum of the first ``n_trees`` tree outputs, accumulated in tree order."""
    n = X.shape[0]
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for t in range(n_trees):
            s += _leaf_value(X, i, sv, thr, lch, rch, val, t)
        out[i] = s
    return out


@njit(cache=True)
def tree_means(X, sv, thr, lch, rch, val, n_trees):
    """Mean output of each tree over the rows of X."""
    n = X.shape[0]
    out = np.zeros(n_trees)
    for t in range(n_trees):
        s = 0.0
        for i in range(n):
            s += _leaf_value(X, i, sv, thr, lch, rch, val, t)
        out[t] = s / n
    return out


@njit(cache=True)
def _var_thresholds(sv, thr, t, j):
    M = sv.shape[1]
    k = 0
    buf = np.empty(M)
    for nd in range(M):
        if sv[t, nd] == j:
            buf[k] = thr[t, nd]
            k += 1
    return np.unique(buf[:k])


@njit(cache=True)
def pd_sum(X, sv, thr, lch, rch, val, n_trees, j, grid, means):
    """Sum over trees of the row-averaged tree output with column j forced
    to each grid value.

    A tree only changes with column j across its own thresholds on j, so
    it is evaluated once per interval between them; trees never splitting
    on j contribute their precomputed mean.
    """
    n = X.shape[0]
    G = grid.shape[0]
    out = np.zeros(G)
    for t in range(n_trees):
        ths = _var_thresholds(sv, thr, t, j)
        m = ths.shape[0]
        if m == 0:
            for g in range(G):
                out[g] += means[t]
            continue
        level = np.empty(m + 1)
        for q in range(m + 1):
            v = -np.inf if q == 0 else ths[q - 1]
            s = 0.0
            for i in range(n):
                s += _leaf_value_override(X, i, sv, thr, lch, rch, val, t, j, v)
            level[q] = s / n
        for g in range(G):
            out[g] += level[np.searchsorted(ths, grid[g], side="right")]
    return out


@njit(cache=True)
def pd_sum2(X, sv, thr, lch, rch, val, n_trees, ja, grid_a, jb, grid_b, means):
    n = X.shape[0]
    Ga = grid_a.shape[0]
    Gb = grid_b.shape[0]
    out = np.zeros((Ga, Gb))
    for t in range(n_trees):
        ta = _var_thresholds(sv, thr, t, ja)
        tb = _var_thresholds(sv, thr, t, jb)
        ma = ta.shape[0]
        mb = tb.shape[0]
        if ma == 0 and mb == 0:
            for g in range(Ga):
                for h in range(Gb):
                    out[g, h] += means[t]
            continue
        level = np.empty((ma + 1, mb + 1))
        for qa in range(ma + 1):
            va = -np.inf if qa == 0 else ta[qa - 1]
            for qb in range(mb + 1):
                vb = -np.inf if qb == 0 else tb[qb - 1]
                s = 0.0
                for i in range(n):
                    s += _leaf_value_override2(X, i, sv, thr, lch, rch, val, t, ja, va, jb, vb)
                level[qa, qb] = s / n
        for g in range(Ga):
            qa = np.searchsorted(ta, grid_a[g], side="right")
            for h in range(Gb):
                out[g, h] += level[qa, np.searchsorted(tb, grid_b[h], side="right")]
    return out


@njit(cache=True)
def apply_update(y, f, pred, shrinkage, inbag):
    """f += shrinkage * pred in place; returns (train_mse, oob_improvement)."""
    n = y.shape[0]
    sse = 0.0
    oob_before = 0.0
    oob_after = 0.0
    n_oob = 0
    for i in range(n):
        old = y[i] - f[i]
        f[i] += shrinkage * pred[i]
        new = y[i] - f[i]
        sse += new * new
        if not inbag[i]:
            oob_before += old * old
            oob_after += new * new
            n_oob += 1
    oob = (oob_before - oob_after) / n_oob if n_oob > 0 else 0.0
    return sse / n, oob
