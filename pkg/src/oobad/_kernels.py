"""Compiled CART kernels.

Trees are stored as flat node arrays. ``feature[node] == -1`` marks a leaf;
children indices are local to the tree. All kernels release the GIL so that
trees can be grown from a thread pool.
"""

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True, nogil=True)
def max_nodes(n_samples, min_leaf):
    return 2 * (n_samples // min_leaf) + 1


@njit(cache=True, nogil=True)
def build_tree(X, y, sample, n_classes, min_leaf, mtry, draws):
    """Grow one CART tree on the bootstrap sample ``sample`` (row indices, with repeats).

    ``n_classes > 0`` selects Gini classification with ``y`` holding class
    codes; ``n_classes == 0`` selects variance-reduction regression.
    ``draws`` holds uniform variates, row ``node`` drives the feature subset
    drawn at that node.

    Returns ``(feature, threshold, left, right, value, n_samples)`` trimmed to
    the number of nodes grown. ``value`` is (nodes, n_classes) class counts
    or (nodes, 1) target means.
    """
    n_total = sample.shape[0]
    n_features = X.shape[1]
    cap = max_nodes(n_total, min_leaf)
    width = n_classes if n_classes > 0 else 1

    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, width), dtype=np.float64)
    node_n = np.zeros(cap, dtype=np.int64)

    idx = sample.copy()
    buf = np.empty(n_total, dtype=np.int64)
    perm = np.arange(n_features)
    vals = np.empty(n_total, dtype=np.float64)
    ys = np.empty(n_total, dtype=np.float64)
    counts_l = np.zeros(width, dtype=np.float64)
    counts_r = np.zeros(width, dtype=np.float64)

    # stack of (node, start, end)
    stack = np.empty((cap, 3), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n_total
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        n = end - start
        node_n[node] = n

        # payload and purity
        pure = True
        if n_classes > 0:
            for i in range(start, end):
                value[node, np.int64(y[idx[i]])] += 1.0
            nonzero = 0
            for c in range(n_classes):
                if value[node, c] > 0:
                    nonzero += 1
            pure = nonzero <= 1
        else:
            s = 0.0
            first = y[idx[start]]
            for i in range(start, end):
                v = y[idx[i]]
                s += v
                if v != first:
                    pure = False
            value[node, 0] = s / n

        if pure or n < 2 * min_leaf:
            continue

        # parent statistics; regression targets are centred on the node mean
        if n_classes > 0:
            parent = 0.0
            for c in range(n_classes):
                parent += value[node, c] * value[node, c]
            parent /= n
            tol = 1e-10 * n
        else:
            mean = value[node, 0]
            sst = 0.0
            for i in range(start, end):
                d = y[idx[i]] - mean
                sst += d * d
            parent = 0.0
            tol = 1e-12 * sst

        # partial Fisher-Yates for the candidate feature subset
        for j in range(n_features):
            perm[j] = j
        for j in range(mtry):
            r = j + np.int64(draws[node, j] * (n_features - j))
            if r >= n_features:
                r = n_features - 1
            tmp = perm[j]
            perm[j] = perm[r]
            perm[r] = tmp
        candidates = np.sort(perm[:mtry])

        best_gain = tol
        best_feature = -1
        best_threshold = 0.0
        for f in candidates:
            for i in range(n):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals[:n], kind="mergesort")
            if vals[order[0]] == vals[order[n - 1]]:
                continue
            if n_classes > 0:
                for c in range(n_classes):
                    counts_l[c] = 0.0
                    counts_r[c] = value[node, c]
                sq_l = 0.0
                sq_r = parent * n
                for i in range(1, n):
                    c = np.int64(y[idx[start + order[i - 1]]])
                    sq_l += 2.0 * counts_l[c] + 1.0
                    sq_r -= 2.0 * counts_r[c] - 1.0
                    counts_l[c] += 1.0
                    counts_r[c] -= 1.0
                    if i < min_leaf or n - i < min_leaf:
                        continue
                    lo = vals[order[i - 1]]
                    hi = vals[order[i]]
                    if lo == hi:
                        continue
                    gain = sq_l / i + sq_r / (n - i) - parent
                    if gain > best_gain:
                        best_gain = gain
                        best_feature = f
                        best_threshold = lo + (hi - lo) / 2.0
                        if best_threshold >= hi:
                            best_threshold = lo
            else:
                mean = value[node, 0]
                for i in range(n):
                    ys[i] = y[idx[start + order[i]]] - mean
                s_l = 0.0
                s_tot = 0.0
                for i in range(n):
                    s_tot += ys[i]
                for i in range(1, n):
                    s_l += ys[i - 1]
                    if i < min_leaf or n - i < min_leaf:
                        continue
                    lo = vals[order[i - 1]]
                    hi = vals[order[i]]
                    if lo == hi:
                        continue
                    s_r = s_tot - s_l
                    gain = s_l * s_l / i + s_r * s_r / (n - i) - s_tot * s_tot / n
                    if gain > best_gain:
                        best_gain = gain
                        best_feature = f
                        best_threshold = lo + (hi - lo) / 2.0
                        if best_threshold >= hi:
                            best_threshold = lo

        if best_feature < 0:
            continue

        # stable partition of the node's rows
        n_left = 0
        for i in range(start, end):
            if X[idx[i], best_feature] <= best_threshold:
                n_left += 1
        li = start
        ri = start + n_left
        for i in range(start, end):
            if X[idx[i], best_feature] <= best_threshold:
                buf[li] = idx[i]
                li += 1
            else:
                buf[ri] = idx[i]
                ri += 1
        for i in range(start, end):
            idx[i] = buf[i]

        feature[node] = best_feature
        threshold[node] = best_threshold
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # right pushed first so the left subtree is grown first
        stack[top, 0] = n_nodes + 1
        stack[top, 1] = start + n_left
        stack[top, 2] = end
        top += 1
        stack[top, 0] = n_nodes
        stack[top, 1] = start
        stack[top, 2] = start + n_left
        top += 1
        n_nodes += 2

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        node_n[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def apply_tree(feature, threshold, left, right, x):
    """Leaf index reached by the single row ``x``."""
    node = 0
    while feature[node] != LEAF:
        if x[feature[node]] <= threshold[node]:
            node = left[node]
        else:
            node = right[node]
    return node


@njit(cache=True, nogil=True)
def oob_predict(offsets, feature, threshold, left, right, leaf_value, X, in_bag):
    """Per-tree predictions for the rows each tree did not train on.

    Returns a (T, N) float64 matrix; entries where ``in_bag[t, i] > 0`` are 0
    and must be masked by the caller.
    """
    n_trees = offsets.shape[0] - 1
    n_rows = X.shape[0]
    out = np.zeros((n_trees, n_rows), dtype=np.float64)
    for t in range(n_trees):
        lo = offsets[t]
        hi = offsets[t + 1]
        f = feature[lo:hi]
        th = threshold[lo:hi]
        le = left[lo:hi]
        ri = right[lo:hi]
        lv = leaf_value[lo:hi]
        for i in range(n_rows):
            if in_bag[t, i] == 0:
                out[t, i] = lv[apply_tree(f, th, le, ri, X[i])]
    return out
