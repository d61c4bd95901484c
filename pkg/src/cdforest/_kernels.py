"""Compiled kernels for split search, tree growth and routing."""

import numpy as np
from numba import njit

# Relative slack under which two split gains count as tied.  Candidates that
# induce the same partition but are swept in a different order differ only
# by rounding; the slack keeps the lowest (feature, threshold) winner.
GAIN_TIE_RTOL = 1e-10

LEAF = -1


@njit(cache=True, nogil=True)
def midpoint(a, b):
    t = 0.5 * a + 0.5 * b
    # routing is `x < t`: need a < t <= b
    if t <= a or t > b:
        t = b
    return t


@njit(cache=True, nogil=True)
def find_split(X, y, counts, members, features, min_samples_leaf):
    """Best bootstrap-weighted CART cut of the node holding `members`.

    `members` must contain only observations with counts > 0.  Returns
    (feature, threshold, n_left_members); feature is -1 when no admissible
    cut exists.
    """
    m = members.shape[0]
    total_w = 0.0
    sum_wy = 0.0
    ymin = np.inf
    ymax = -np.inf
    for i in range(m):
        j = members[i]
        w = counts[j]
        total_w += w
        sum_wy += w * y[j]
        if y[j] < ymin:
            ymin = y[j]
        if y[j] > ymax:
            ymax = y[j]
    if m < 2 or total_w < 2 * min_samples_leaf or ymin == ymax:
        return -1, 0.0, 0
    mean = sum_wy / total_w
    tss = 0.0
    cw = np.empty(m)
    cy = np.empty(m)
    for i in range(m):
        j = members[i]
        r = y[j] - mean
        tss += counts[j] * r * r
    tol = GAIN_TIE_RTOL * tss

    best_f = -1
    best_t = 0.0
    best_left = 0
    best_gain = -np.inf
    vals = np.empty(m)
    for fi in range(features.shape[0]):
        f = features[fi]
        for i in range(m):
            vals[i] = X[members[i], f]
        order = np.argsort(vals, kind="mergesort")
        stot = 0.0
        for i in range(m):
            j = members[order[i]]
            cw[i] = counts[j]
            cy[i] = counts[j] * (y[j] - mean)
            stot += cy[i]
        wl = 0.0
        sl = 0.0
        for i in range(m - 1):
            wl += cw[i]
            sl += cy[i]
            a = vals[order[i]]
            b = vals[order[i + 1]]
            if not b > a:
                continue
            wr = total_w - wl
            if wl < min_samples_leaf or wr < min_samples_leaf:
                continue
            sr = stot - sl
            gain = sl * sl / wl + sr * sr / wr
            if gain > best_gain + tol:
                best_gain = gain
                best_f = f
                best_t = midpoint(a, b)
                best_left = i + 1
    return best_f, best_t, best_left


@njit(cache=True, nogil=True)
def _draw_features(rng, pool, max_features):
    d = pool.shape[0]
    for i in range(d):
        pool[i] = i
    if max_features < d:
        # partial Fisher-Yates
        for i in range(max_features):
            k = i + rng.integers(0, d - i)
            tmp = pool[i]
            pool[i] = pool[k]
            pool[k] = tmp
    return np.sort(pool[:max_features])


@njit(cache=True, nogil=True)
def grow(X, y, counts, max_features, min_samples_leaf, rng):
    """Grow one tree on the bootstrap sample described by `counts`.

    Returns node arrays (feature, threshold, left, right); feature == -1
    marks a leaf.
    """
    d = X.shape[1]
    present = np.flatnonzero(counts > 0)
    m = present.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    pool = np.empty(d, dtype=np.int64)
    buf = np.empty(m, dtype=np.int64)

    # stack of (node, start, end) into `present`
    stack = np.empty((cap, 3), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = m
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        seg = present[start:end]
        feats = _draw_features(rng, pool, max_features)
        f, t, _ = find_split(X, y, counts, seg, feats, min_samples_leaf)
        if f < 0:
            continue
        nl = 0
        nr = 0
        for i in range(end - start):
            j = seg[i]
            if X[j, f] < t:
                present[start + nl] = j
                nl += 1
            else:
                buf[nr] = j
                nr += 1
        for i in range(nr):
            present[start + nl + i] = buf[i]
        feature[node] = f
        threshold[node] = t
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # right pushed first so the left subtree is expanded first
        stack[top, 0] = rc
        stack[top, 1] = start + nl
        stack[top, 2] = end
        top += 1
        stack[top, 0] = lc
        stack[top, 1] = start
        stack[top, 2] = start + nl
        top += 1
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def apply(feature, threshold, left, right, X):
    """Node id of the leaf reached by every row of X."""
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def accumulate(W, query_leaf, offsets, members, share):
    """W[q, members of leaf] += share for each query q.

    `share` is indexed by member position (same layout as `members`).
    """
    for q in range(query_leaf.shape[0]):
        leaf = query_leaf[q]
        for pos in range(offsets[leaf], offsets[leaf + 1]):
            W[q, members[pos]] += share[pos]
