"""Pure numpy implementation of the hot kernels.

The tree kernels mirror ``_tree_core.pyx`` operation for operation: same
random stream, same summation order, same tie-breaking, so both backends
grow the same trees. The elastic-net sweep mirrors ``_enet_core.pyx`` and
agrees with it to rounding.
"""
import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TWO_NEG53 = 1.0 / 9007199254740992.0


class SplitMix64:
    """splitmix64 generator; the compiled core carries an identical copy."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def next_u64(self):
        self.state = (self.state + _GOLDEN) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self):
        return (self.next_u64() >> 11) * _TWO_NEG53

    def below(self, k):
        return int(self.uniform() * k)


def _feature_subset(rng, n_features, max_features):
    if max_features >= n_features:
        return list(range(n_features))
    pool = list(range(n_features))
    for i in range(max_features):
        j = i + rng.below(n_features - i)
        pool[i], pool[j] = pool[j], pool[i]
    return sorted(pool[:max_features])


def _seqsum(a):
    if a.shape[0] == 0:
        return 0.0
    return float(np.cumsum(a)[-1])


# a later feature must beat the incumbent by this relative margin, so that
# features inducing the same partition tie despite summation-order rounding
TIE_RTOL = 1e-10


def _beats(score, best):
    return best[1] < 0 or score > best[0] + TIE_RTOL * abs(best[0])


def _midpoint(lo, hi):
    mid = 0.5 * (lo + hi)
    if not (lo < mid < hi):
        mid = lo
    return mid


def _best_exact(X, g, node, features, min_leaf, reg_lambda, G):
    n_node = node.shape[0]
    best = (-np.inf, -1, 0.0)
    for f in features:
        xs = X[node, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        cum = np.cumsum(g[node][order])
        n_left = np.arange(1, n_node, dtype=np.float64)
        GL = cum[:-1]
        GR = G - GL
        ok = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n_node - n_left >= min_leaf)
        if not ok.any():
            continue
        scores = GL * GL / (n_left + reg_lambda) + GR * GR / ((n_node - n_left) + reg_lambda)
        scores = np.where(ok, scores, -np.inf)
        i = int(np.argmax(scores))
        if _beats(scores[i], best):
            best = (float(scores[i]), f, _midpoint(float(xs[i]), float(xs[i + 1])))
    return best


def _best_random(X, g, node, features, min_leaf, reg_lambda, G, rng):
    n_node = node.shape[0]
    gn = g[node]
    best = (-np.inf, -1, 0.0)
    for f in features:
        xs = X[node, f]
        lo = float(xs.min())
        hi = float(xs.max())
        if not hi > lo:
            continue
        while True:
            theta = lo + rng.uniform() * (hi - lo)
            if lo < theta < hi:
                break
        left = xs <= theta
        n_left = int(left.sum())
        if n_left < min_leaf or n_node - n_left < min_leaf:
            continue
        GL = _seqsum(gn[left])
        GR = G - GL
        score = GL * GL / (n_left + reg_lambda) + GR * GR / ((n_node - n_left) + reg_lambda)
        if _beats(score, best):
            best = (score, f, theta)
    return best


def build_tree(X, g, samples, max_depth, min_samples_leaf, max_features,
               splitter, reg_lambda, gamma, seed, presorted=None):
    """Grow one depth-first tree on gradients ``g`` (unit hessians).

    ``presorted`` is accepted for signature parity with the compiled kernel;
    the per-node stable sort here yields the same orderings.

    Returns ``(feature, threshold, left, right, value)`` arrays; leaves have
    ``feature == -1``. ``splitter`` is 0 for exhaustive search, 1 for one
    uniform random threshold per candidate feature.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    samples = np.asarray(samples, dtype=np.intp)
    n_features = X.shape[1]
    rng = SplitMix64(seed)

    feature, threshold, left, right, value = [], [], [], [], []
    # (node samples, depth, parent id, is_left)
    stack = [(samples, 0, -1, False)]
    while stack:
        node, depth, parent, is_left = stack.pop()
        node_id = len(feature)
        if parent >= 0:
            if is_left:
                left[parent] = node_id
            else:
                right[parent] = node_id
        n_node = node.shape[0]
        gn = g[node]
        G = _seqsum(gn)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(-G / (n_node + reg_lambda))

        if (max_depth >= 0 and depth >= max_depth) or n_node < 2 * min_samples_leaf \
                or n_node < 2 or np.all(gn == gn[0]):
            continue
        features = _feature_subset(rng, n_features, max_features)
        if splitter == 0:
            score, f, theta = _best_exact(X, g, node, features, min_samples_leaf,
                                         reg_lambda, G)
        else:
            score, f, theta = _best_random(X, g, node, features, min_samples_leaf,
                                          reg_lambda, G, rng)
        if f < 0:
            continue
        gain = 0.5 * (score - G * G / (n_node + reg_lambda)) - gamma
        if not gain > 0.0:
            continue
        feature[node_id] = f
        threshold[node_id] = theta
        mask = X[node, f] <= theta
        stack.append((node[~mask], depth + 1, node_id, False))
        stack.append((node[mask], depth + 1, node_id, True))

    return (np.asarray(feature, dtype=np.intp), np.asarray(threshold, dtype=np.float64),
            np.asarray(left, dtype=np.intp), np.asarray(right, dtype=np.intp),
            np.asarray(value, dtype=np.float64))


def _best_hist(codes, g, node, n_bins, bin_lower, bin_upper, min_leaf, reg_lambda, G):
    n_node = node.shape[0]
    n_features = codes.shape[1]
    width = bin_lower.shape[1]
    flat = (codes[node] + np.arange(n_features) * width).ravel()
    hg = np.bincount(flat, weights=np.repeat(g[node], n_features),
                     minlength=n_features * width).reshape(n_features, width)
    hc = np.bincount(flat, minlength=n_features * width).reshape(n_features, width)
    best = (-np.inf, -1, 0, 0.0)
    for f in range(n_features):
        nb = int(n_bins[f])
        nonempty = np.flatnonzero(hc[f, :nb])
        if nonempty.shape[0] < 2:
            continue
        cum_g = np.cumsum(hg[f, :nb])
        cum_c = np.cumsum(hc[f, :nb])
        prev = nonempty[:-1]
        GL = cum_g[prev]
        n_left = cum_c[prev].astype(np.float64)
        GR = G - GL
        ok = (n_left >= min_leaf) & (n_node - n_left >= min_leaf)
        if not ok.any():
            continue
        scores = GL * GL / (n_left + reg_lambda) + GR * GR / ((n_node - n_left) + reg_lambda)
        scores = np.where(ok, scores, -np.inf)
        i = int(np.argmax(scores))
        if _beats(scores[i], best):
            b = int(prev[i])
            nxt = int(nonempty[i + 1])
            theta = _midpoint(float(bin_upper[f, b]), float(bin_lower[f, nxt]))
            best = (float(scores[i]), f, b, theta)
    return best


def build_hist_tree(codes, n_bins, bin_lower, bin_upper, g, samples, max_leaves,
                    max_depth, min_samples_leaf, reg_lambda, gamma):
    """Grow one leaf-wise tree over pre-binned features.

    The open leaf with the largest positive gain is split next (earliest
    node on ties) until ``max_leaves`` leaves exist or no split pays.
    """
    codes = np.ascontiguousarray(codes, dtype=np.int32)
    g = np.ascontiguousarray(g, dtype=np.float64)
    samples = np.asarray(samples, dtype=np.intp)

    feature, threshold, left, right, value = [], [], [], [], []
    open_leaves = []  # [node_id, samples, depth, gain, feature, bin]

    def add_node(node, depth):
        node_id = len(feature)
        gn = g[node]
        n_node = node.shape[0]
        G = _seqsum(gn)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(-G / (n_node + reg_lambda))
        if (max_depth >= 0 and depth >= max_depth) or n_node < 2 * min_samples_leaf \
                or n_node < 2 or np.all(gn == gn[0]):
            return node_id
        score, f, b, theta = _best_hist(codes, g, node, n_bins, bin_lower, bin_upper,
                                        min_samples_leaf, reg_lambda, G)
        if f < 0:
            return node_id
        gain = 0.5 * (score - G * G / (n_node + reg_lambda)) - gamma
        if gain > 0.0:
            open_leaves.append([node_id, node, depth, gain, f, b, theta])
        return node_id

    add_node(samples, 0)
    n_leaves = 1
    while n_leaves < max_leaves and open_leaves:
        k = 0
        for i in range(1, len(open_leaves)):
            if open_leaves[i][3] > open_leaves[k][3]:
                k = i
        node_id, node, depth, _, f, b, theta = open_leaves.pop(k)
        mask = codes[node, f] <= b
        feature[node_id] = f
        threshold[node_id] = theta
        left[node_id] = add_node(node[mask], depth + 1)
        right[node_id] = add_node(node[~mask], depth + 1)
        n_leaves += 1

    return (np.asarray(feature, dtype=np.intp), np.asarray(threshold, dtype=np.float64),
            np.asarray(left, dtype=np.intp), np.asarray(right, dtype=np.intp),
            np.asarray(value, dtype=np.float64))


def apply_tree(X, feature, threshold, left, right, value):
    X = np.asarray(X, dtype=np.float64)
    node = np.zeros(X.shape[0], dtype=np.intp)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        idx = rows[active]
        nd = node[idx]
        go_left = X[idx, feature[nd]] <= threshold[nd]
        node[idx] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return value[node]


def enet_descent(X, y, beta, intercept, l1, l2, tol, max_iter, fit_intercept):
    """Cyclic coordinate descent sweeps for the elastic net.

    Returns ``(beta, intercept, iterations, converged, objectives)`` where
    ``objectives`` holds the penalised objective after every sweep.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    beta = np.array(beta, dtype=np.float64)
    col_sq = (X * X).sum(axis=0) / n
    r = y - X @ beta - intercept
    obj = []
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        max_step = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = beta[j]
            rho = float(X[:, j] @ r) / n + col_sq[j] * old
            new = math.copysign(max(abs(rho) - l1, 0.0), rho) / (col_sq[j] + l2)
            if new != old:
                r -= X[:, j] * (new - old)
                beta[j] = new
                max_step = max(max_step, abs(new - old))
        if fit_intercept:
            shift = float(r.mean())
            if shift != 0.0:
                intercept += shift
                r -= shift
                max_step = max(max_step, abs(shift))
        e = y - X @ beta - intercept
        obj.append(0.5 * float(e @ e) / n + l1 * float(np.abs(beta).sum())
                   + 0.5 * l2 * float(beta @ beta))
        if max_step < tol:
            converged = True
            break
    return beta, intercept, it, converged, np.array(obj)
