"""Compiled tree-growing and traversal kernels.

Everything here operates on flat numpy arrays so that a whole forest can be
grown in a single compiled call. Node arrays use the following layout:

  feature[k]    split feature index, ``LEAF`` for leaves, ``TASK_SPLIT`` for
                multi-task splits on task membership
  threshold[k]  cut value; rows with ``x[feature] <= threshold`` go left
  left[k], right[k]
                child node ids (``-1`` for leaves)
  count[k]      number of (possibly repeated) training rows reaching the node
  value[k, :]   mean output vector of those rows
  taskmask[k]   bit ``t`` set when task ``t`` is routed left at a task split

Random numbers come from numba's per-thread generator, which is reseeded at
the start of every tree. A tree is therefore a pure function of its seed,
no matter which thread grows it.
"""

import numpy as np
from numba import config, njit, prange

# The bundled TBB is often too old; skip it instead of warning on first use.
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

LEAF = -1
TASK_SPLIT = -2

MODE_EXHAUSTIVE = 0
MODE_RANDOM = 1


@njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@njit(cache=True)
def _node_mean(Y, idx, start, end, out):
    d = Y.shape[1]
    m = end - start
    for j in range(d):
        out[j] = 0.0
    for k in range(start, end):
        r = idx[k]
        for j in range(d):
            out[j] += Y[r, j]
    for j in range(d):
        out[j] /= m


@njit(cache=True)
def _is_constant(Y, idx, start, end):
    d = Y.shape[1]
    r0 = idx[start]
    for k in range(start + 1, end):
        r = idx[k]
        for j in range(d):
            if Y[r, j] != Y[r0, j]:
                return False
    return True


@njit(cache=True)
def _centered_total(Y, idx, start, end, mean, out):
    d = Y.shape[1]
    for j in range(d):
        out[j] = 0.0
    for k in range(start, end):
        r = idx[k]
        for j in range(d):
            out[j] += Y[r, j] - mean[j]


@njit(cache=True)
def _gain(SL, S, nL, nR):
    # Minimising left + right SSE is equivalent to maximising this quantity.
    g = 0.0
    for j in range(SL.shape[0]):
        sr = S[j] - SL[j]
        g += SL[j] * SL[j] / nL + sr * sr / nR
    return g


@njit(cache=True)
def _search_exhaustive(X, Y, idx, start, end, feats, min_leaf, mean, S):
    """Best CART split over ``feats`` (assumed sorted ascending)."""
    m = end - start
    d = Y.shape[1]
    vals = np.empty(m)
    SL = np.empty(d)
    found = False
    best_gain = -np.inf
    best_f = -1
    best_t = 0.0
    for fi in range(feats.shape[0]):
        f = feats[fi]
        for k in range(m):
            vals[k] = X[idx[start + k], f]
        order = np.argsort(vals)
        if vals[order[0]] == vals[order[m - 1]]:
            continue
        for j in range(d):
            SL[j] = 0.0
        for i in range(m - 1):
            r = idx[start + order[i]]
            for j in range(d):
                SL[j] += Y[r, j] - mean[j]
            nL = i + 1
            nR = m - nL
            if nR < min_leaf:
                break
            if nL < min_leaf:
                continue
            v0 = vals[order[i]]
            v1 = vals[order[i + 1]]
            if v0 == v1:
                continue
            g = _gain(SL, S, nL, nR)
            if g > best_gain:
                best_gain = g
                best_f = f
                t = v0 + (v1 - v0) / 2.0
                if t >= v1:
                    t = v0
                best_t = t
                found = True
    return found, best_f, best_t, best_gain


@njit(cache=True)
def _draw_open(lo, hi):
    # uniform on the open interval (lo, hi)
    while True:
        t = lo + (hi - lo) * np.random.random()
        if lo < t < hi:
            return t


@njit(cache=True)
def _search_random(X, Y, idx, start, end, feats, min_leaf, n_cuts, mean, S):
    """Best among ``n_cuts`` uniform random cuts per feature in ``feats``."""
    m = end - start
    d = Y.shape[1]
    SL = np.empty(d)
    found = False
    best_gain = -np.inf
    best_f = -1
    best_t = 0.0
    for fi in range(feats.shape[0]):
        f = feats[fi]
        lo = X[idx[start], f]
        hi = lo
        for k in range(start + 1, end):
            v = X[idx[k], f]
            if v < lo:
                lo = v
            elif v > hi:
                hi = v
        if lo == hi:
            continue
        for _ in range(n_cuts):
            t = _draw_open(lo, hi)
            for j in range(d):
                SL[j] = 0.0
            nL = 0
            for k in range(start, end):
                r = idx[k]
                if X[r, f] <= t:
                    nL += 1
                    for j in range(d):
                        SL[j] += Y[r, j] - mean[j]
            nR = m - nL
            if nL < min_leaf or nR < min_leaf:
                continue
            g = _gain(SL, S, nL, nR)
            if g > best_gain or (g == best_gain and f == best_f and t < best_t):
                best_gain = g
                best_f = f
                best_t = t
                found = True
    return found, best_f, best_t, best_gain


@njit(cache=True)
def _task_features(Y, tasks, idx, start, end, n_tasks, alpha, f, present):
    """Shrunken per-task means of a stacked single-output node.

    Fills ``f[t]`` and ``present[t]``; returns the node mean. Absent tasks get
    the node mean, the value the shrinkage formula yields with no task rows.
    """
    m = end - start
    sums = np.zeros(n_tasks)
    cnt = np.zeros(n_tasks, dtype=np.int64)
    total = 0.0
    for k in range(start, end):
        r = idx[k]
        sums[tasks[r]] += Y[r, 0]
        cnt[tasks[r]] += 1
        total += Y[r, 0]
    gmean = total / m
    for t in range(n_tasks):
        present[t] = cnt[t] > 0
        if cnt[t] > 0:
            f[t] = (sums[t] + alpha * gmean) / (cnt[t] + alpha)
        else:
            f[t] = gmean
    return gmean


@njit(cache=True)
def _search_task(Y, tasks, idx, start, end, n_tasks, alpha, min_leaf, mean, S):
    """One random task split; returns (found, cut, gain, left-task bitmask)."""
    m = end - start
    f = np.empty(n_tasks)
    present = np.zeros(n_tasks, dtype=np.bool_)
    _task_features(Y, tasks, idx, start, end, n_tasks, alpha, f, present)
    lo = np.inf
    hi = -np.inf
    for t in range(n_tasks):
        if present[t]:
            if f[t] < lo:
                lo = f[t]
            if f[t] > hi:
                hi = f[t]
    if not lo < hi:
        return False, 0.0, -np.inf, np.int64(0)
    cut = _draw_open(lo, hi)
    mask = np.int64(0)
    for t in range(n_tasks):
        if f[t] <= cut:
            mask |= np.int64(1) << t
    SL = np.zeros(1)
    nL = 0
    for k in range(start, end):
        r = idx[k]
        if (mask >> tasks[r]) & 1:
            nL += 1
            SL[0] += Y[r, 0] - mean[0]
    nR = m - nL
    if nL < min_leaf or nR < min_leaf:
        return False, cut, -np.inf, mask
    return True, cut, _gain(SL, S, nL, nR), mask


@njit(cache=True)
def _sample_features(perm, m_try, out):
    # partial Fisher-Yates; perm stays a permutation so repeated use is uniform
    p = perm.shape[0]
    for i in range(m_try):
        j = i + np.random.randint(p - i)
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
        out[i] = perm[i]
    out.sort()


@njit(cache=True)
def _partition(X, tasks, idx, start, end, f, t, mask):
    i = start
    j = end - 1
    while i <= j:
        r = idx[i]
        if f == TASK_SPLIT:
            goes_left = (mask >> tasks[r]) & 1 == 1
        else:
            goes_left = X[r, f] <= t
        if goes_left:
            i += 1
        else:
            idx[i] = idx[j]
            idx[j] = r
            j -= 1
    return i


@njit(cache=True)
def _grow(X, Y, idx, m_try, min_leaf, mode, n_cuts, tasks, n_tasks, alpha,
          feature, threshold, left, right, count, value, taskmask):
    """Grow one unpruned tree on ``idx`` (modified in place); returns node count."""
    p = X.shape[1]
    d = Y.shape[1]
    n = idx.shape[0]
    perm = np.arange(p)
    feats = np.empty(m_try, dtype=np.int64)
    mean = np.empty(d)
    S = np.empty(d)
    stack_node = np.empty(n + 1, dtype=np.int64)
    stack_lo = np.empty(n + 1, dtype=np.int64)
    stack_hi = np.empty(n + 1, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_lo[top]
        end = stack_hi[top]
        m = end - start
        _node_mean(Y, idx, start, end, mean)
        for j in range(d):
            value[node, j] = mean[j]
        count[node] = m
        feature[node] = LEAF
        threshold[node] = 0.0
        left[node] = -1
        right[node] = -1
        taskmask[node] = 0
        if m < 2 * min_leaf or _is_constant(Y, idx, start, end):
            continue
        _centered_total(Y, idx, start, end, mean, S)
        _sample_features(perm, m_try, feats)
        if mode == MODE_EXHAUSTIVE:
            found, bf, bt, bg = _search_exhaustive(X, Y, idx, start, end, feats, min_leaf, mean, S)
        else:
            found, bf, bt, bg = _search_random(X, Y, idx, start, end, feats, min_leaf, n_cuts, mean, S)
        bmask = np.int64(0)
        if n_tasks > 1:
            tfound, tcut, tg, tmask = _search_task(Y, tasks, idx, start, end, n_tasks, alpha,
                                                   min_leaf, mean, S)
            if tfound and (not found or tg > bg):
                found = True
                bf = TASK_SPLIT
                bt = tcut
                bg = tg
                bmask = tmask
        if not found:
            continue
        mid = _partition(X, tasks, idx, start, end, bf, bt, bmask)
        feature[node] = bf
        threshold[node] = bt
        taskmask[node] = bmask
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # right pushed first so the left subtree is grown (and numbered) first
        stack_node[top] = n_nodes + 1
        stack_lo[top] = mid
        stack_hi[top] = end
        top += 1
        stack_node[top] = n_nodes
        stack_lo[top] = start
        stack_hi[top] = mid
        top += 1
        n_nodes += 2
    return n_nodes


@njit(cache=True)
def _draw_rows(n, size, bootstrap, out):
    if bootstrap:
        for i in range(size):
            out[i] = np.random.randint(n)
    else:
        for i in range(size):
            out[i] = i


@njit(cache=True)
def draw_rows(seed, n, size, bootstrap):
    _seed(seed)
    out = np.empty(size, dtype=np.int64)
    _draw_rows(n, size, bootstrap, out)
    return out


@njit(cache=True)
def grow_single(X, Y, rows, seed, m_try, min_leaf, mode, n_cuts, tasks, n_tasks, alpha):
    cap = 2 * rows.shape[0]
    d = Y.shape[1]
    feature = np.empty(cap, dtype=np.int64)
    threshold = np.empty(cap)
    left = np.empty(cap, dtype=np.int64)
    right = np.empty(cap, dtype=np.int64)
    count = np.empty(cap, dtype=np.int64)
    value = np.empty((cap, d))
    taskmask = np.empty(cap, dtype=np.int64)
    idx = rows.copy()
    _seed(seed)
    k = _grow(X, Y, idx, m_try, min_leaf, mode, n_cuts, tasks, n_tasks, alpha,
              feature, threshold, left, right, count, value, taskmask)
    return (feature[:k].copy(), threshold[:k].copy(), left[:k].copy(), right[:k].copy(),
            count[:k].copy(), value[:k].copy(), taskmask[:k].copy())


@njit(cache=True, parallel=True)
def grow_forest(X, Y, seeds, size, bootstrap, m_try, min_leaf, mode, n_cuts,
                tasks, n_tasks, alpha):
    """Grow ``len(seeds)`` trees into padded ``(B, 2 * size)`` node arrays."""
    B = seeds.shape[0]
    n = X.shape[0]
    d = Y.shape[1]
    cap = 2 * size
    feature = np.empty((B, cap), dtype=np.int64)
    threshold = np.empty((B, cap))
    left = np.empty((B, cap), dtype=np.int64)
    right = np.empty((B, cap), dtype=np.int64)
    count = np.empty((B, cap), dtype=np.int64)
    value = np.empty((B, cap, d))
    taskmask = np.empty((B, cap), dtype=np.int64)
    n_nodes = np.empty(B, dtype=np.int64)
    for b in prange(B):
        _seed(seeds[b])
        idx = np.empty(size, dtype=np.int64)
        _draw_rows(n, size, bootstrap, idx)
        n_nodes[b] = _grow(X, Y, idx, m_try, min_leaf, mode, n_cuts, tasks, n_tasks, alpha,
                           feature[b], threshold[b], left[b], right[b], count[b],
                           value[b], taskmask[b])
    return feature, threshold, left, right, count, value, taskmask, n_nodes


@njit(cache=True)
def _route(x, task, feature, threshold, left, right, taskmask, root):
    k = root
    while True:
        f = feature[k]
        if f == LEAF:
            return k
        if f == TASK_SPLIT:
            go_left = (taskmask[k] >> task) & 1 == 1
        else:
            go_left = x[f] <= threshold[k]
        k = left[k] if go_left else right[k]


@njit(cache=True)
def route(X, tasks, feature, threshold, left, right, taskmask, root):
    """Leaf ids reached by each row of ``X`` in the tree rooted at ``root``."""
    m = X.shape[0]
    out = np.empty(m, dtype=np.int64)
    for i in range(m):
        task = tasks[i] if tasks.shape[0] > 0 else 0
        out[i] = _route(X[i], task, feature, threshold, left, right, taskmask, root)
    return out


@njit(cache=True)
def predict_forest(X, tasks, feature, threshold, left, right, value, taskmask, offsets):
    """Mean leaf value over all trees; trees are summed in index order."""
    m = X.shape[0]
    d = value.shape[1]
    B = offsets.shape[0] - 1
    out = np.zeros((m, d))
    for i in range(m):
        task = tasks[i] if tasks.shape[0] > 0 else 0
        for b in range(B):
            k = _route(X[i], task, feature, threshold, left, right, taskmask, offsets[b])
            for j in range(d):
                out[i, j] += value[k, j]
        for j in range(d):
            out[i, j] /= B
    return out


# Seeded entry points for single-node split searches (used by the public
# split-search functions and their tests).

@njit(cache=True)
def split_exhaustive(X, Y, idx, feats, min_leaf):
    m = idx.shape[0]
    d = Y.shape[1]
    mean = np.empty(d)
    S = np.empty(d)
    _node_mean(Y, idx, 0, m, mean)
    _centered_total(Y, idx, 0, m, mean, S)
    return _search_exhaustive(X, Y, idx, 0, m, feats, min_leaf, mean, S)


@njit(cache=True)
def split_random(X, Y, idx, feats, min_leaf, n_cuts, seed):
    m = idx.shape[0]
    d = Y.shape[1]
    mean = np.empty(d)
    S = np.empty(d)
    _seed(seed)
    _node_mean(Y, idx, 0, m, mean)
    _centered_total(Y, idx, 0, m, mean, S)
    return _search_random(X, Y, idx, 0, m, feats, min_leaf, n_cuts, mean, S)


@njit(cache=True)
def split_task(Y, tasks, idx, n_tasks, alpha, min_leaf, seed):
    m = idx.shape[0]
    mean = np.empty(1)
    S = np.empty(1)
    _seed(seed)
    _node_mean(Y, idx, 0, m, mean)
    _centered_total(Y, idx, 0, m, mean, S)
    return _search_task(Y, tasks, idx, 0, m, n_tasks, alpha, min_leaf, mean, S)


@njit(cache=True)
def task_features(Y, tasks, n_tasks, alpha):
    idx = np.arange(Y.shape[0])
    f = np.empty(n_tasks)
    present = np.zeros(n_tasks, dtype=np.bool_)
    _task_features(Y, tasks, idx, 0, idx.shape[0], n_tasks, alpha, f, present)
    return f, present
