"""Regression trees, forests and boosted ensembles.

Every tree is grown on squared-loss gradients with unit hessians, so one
kernel covers variance-reduction CART (gradient ``-(y - mean)``, no
penalty) and the penalised second-order trees of the boosters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import _core
from .linear import check_columns

SPLITTERS = {"best": 0, "random": 1}


@dataclass(frozen=True)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int
    max_depth: int = -1
    min_samples_leaf: int = 1

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    @property
    def n_leaves(self):
        return int((self.feature < 0).sum())

    @property
    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, X):
        X = check_columns(X, self.n_features)
        return _core.apply_tree(X, self.feature, self.threshold, self.left, self.right,
                                self.value)


@dataclass(frozen=True)
class EnsembleModel:
    """Forest (uniform average) or boosted expansion of trees.

    Boosted models predict ``base_prediction + learning_rate * sum(w_k h_k)``.
    """

    algorithm: str
    kind: str
    trees: tuple
    tree_weights: np.ndarray
    n_features: int
    learning_rate: float = 1.0
    base_prediction: float = 0.0
    params: dict = field(default_factory=dict)
    train_loss: tuple = ()

    def predict(self, X):
        X = check_columns(X, self.n_features)
        X = np.ascontiguousarray(X, dtype=np.float64)
        if self.kind == "forest":
            if not self.trees:
                raise ValueError("forest has no trees")
            total = np.zeros(X.shape[0])
            for tree in self.trees:
                total += tree.predict(X)
            return total / len(self.trees)
        out = np.full(X.shape[0], self.base_prediction)
        for w, tree in zip(self.tree_weights, self.trees):
            out += self.learning_rate * w * tree.predict(X)
        return out


def _validate_xy(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X of shape {X.shape} does not match y of shape {y.shape}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in X or y")
    return X, y


def resolve_max_features(max_features, p):
    if max_features is None or max_features == "all":
        return p
    if max_features == "sqrt":
        return max(1, int(math.sqrt(p)))
    if max_features == "third":
        return max(1, p // 3)
    if isinstance(max_features, float):
        if not 0 < max_features <= 1:
            raise ValueError(f"fractional max_features must lie in (0, 1], got {max_features}")
        return max(1, int(max_features * p))
    m = int(max_features)
    if not 1 <= m <= p:
        raise ValueError(f"max_features={m} must lie in 1..{p}")
    return m


def _depth(max_depth):
    return -1 if max_depth is None else int(max_depth)


def _tree_streams(seed, index):
    """Independent (numpy generator, splitmix seed) pair for task ``index``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    kernel_seed = int(ss.generate_state(1, dtype=np.uint64)[0])
    return np.random.default_rng(ss), kernel_seed


def presort(X):
    """Stable per-column row order, shape ``(p, n)``; shared by all trees of
    an ensemble so the kernel can skip its root sort."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def _grow(X, g, rows, max_depth, min_samples_leaf, max_features, splitter,
          reg_lambda, gamma, kernel_seed, order=None):
    parts = _core.build_tree(X, g, rows, _depth(max_depth), int(min_samples_leaf),
                             int(max_features), SPLITTERS[splitter], float(reg_lambda),
                             float(gamma), kernel_seed, order)
    return parts


def fit_tree(X, y, max_depth=None, min_samples_leaf=1, max_features=None,
             splitter="best", seed=0, rows=None):
    """Single variance-reduction regression tree (CART when ``splitter='best'``)."""
    X, y = _validate_xy(X, y)
    if min_samples_leaf < 1:
        raise ValueError("min_samples_leaf must be at least 1")
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows, dtype=np.intp)
    m = resolve_max_features(max_features, X.shape[1])
    _, kernel_seed = _tree_streams(seed, 0)
    return _variance_tree(X, y, rows, max_depth, min_samples_leaf, m, splitter, kernel_seed)


def _variance_tree(X, y, rows, max_depth, min_samples_leaf, m, splitter, kernel_seed,
                   order=None):
    # centring keeps the split scores free of cancellation
    offset = float(np.mean(y[rows]))
    g = -(y - offset)
    f, t, l, r, v = _grow(X, g, rows, max_depth, min_samples_leaf, m, splitter, 0.0, 0.0,
                          kernel_seed, order)
    return RegressionTree(f, t, l, r, v + offset, X.shape[1], _depth(max_depth),
                          int(min_samples_leaf))


def fit_forest(X, y, n_trees=100, max_features="third", bootstrap=True, max_depth=None,
               min_samples_leaf=1, seed=0):
    """Random forest: bootstrap-resampled CART trees over random feature subsets."""
    X, y = _validate_xy(X, y)
    n, p = X.shape
    if n < 2:
        raise ValueError("need at least 2 rows")
    if n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    m = resolve_max_features(max_features, p)
    order = presort(X)
    trees = []
    for t in range(int(n_trees)):
        rng, kernel_seed = _tree_streams(seed, t)
        # sorted resample: same multiset of rows, lets the kernel reuse ``order``
        rows = np.sort(rng.integers(0, n, size=n)) if bootstrap else np.arange(n)
        trees.append(_variance_tree(X, y, rows, max_depth, min_samples_leaf, m, "best",
                                    kernel_seed, order))
    params = dict(n_trees=n_trees, max_features=max_features, bootstrap=bootstrap,
                  max_depth=max_depth, min_samples_leaf=min_samples_leaf, seed=seed)
    return EnsembleModel("rf", "forest", tuple(trees), np.full(len(trees), 1.0 / len(trees)),
                         p, params=params)


def fit_extra_trees(X, y, n_trees=100, max_features=None, max_depth=None,
                    min_samples_leaf=1, seed=0):
    """Extremely randomized trees.

    Every tree sees all rows. At each node one threshold is drawn uniformly
    inside the node range of each candidate feature and the draw with the
    largest variance reduction is kept.
    """
    X, y = _validate_xy(X, y)
    n, p = X.shape
    if n < 2:
        raise ValueError("need at least 2 rows")
    m = resolve_max_features(max_features, p)
    rows = np.arange(n)
    trees = []
    for t in range(int(n_trees)):
        _, kernel_seed = _tree_streams(seed, t)
        trees.append(_variance_tree(X, y, rows, max_depth, min_samples_leaf, m, "random",
                                    kernel_seed))
    params = dict(n_trees=n_trees, max_features=max_features, max_depth=max_depth,
                  min_samples_leaf=min_samples_leaf, seed=seed)
    return EnsembleModel("etr", "forest", tuple(trees), np.full(len(trees), 1.0 / len(trees)),
                         p, params=params)


def variance_reduction(y, left_mask):
    """Parent variance minus the size-weighted child variances."""
    y = np.asarray(y, dtype=float)
    left_mask = np.asarray(left_mask, dtype=bool)
    yl, yr = y[left_mask], y[~left_mask]
    n = y.shape[0]
    return float(y.var() - yl.shape[0] / n * yl.var() - yr.shape[0] / n * yr.var())


def leaf_weight(g, reg_lambda=0.0, h=None):
    """Optimal leaf value ``-sum(g) / (sum(h) + lambda)``."""
    g = np.asarray(g, dtype=float)
    H = float(g.shape[0]) if h is None else float(np.sum(h))
    return -float(np.sum(g)) / (H + reg_lambda)


def split_gain(g_left, g_right, reg_lambda=0.0, gamma=0.0):
    """Penalised second-order gain of splitting a leaf (unit hessians)."""
    GL, GR = float(np.sum(g_left)), float(np.sum(g_right))
    HL, HR = float(len(g_left)), float(len(g_right))
    G, H = GL + GR, HL + HR
    return 0.5 * (GL * GL / (HL + reg_lambda) + GR * GR / (HR + reg_lambda)
                  - G * G / (H + reg_lambda)) - gamma


def _subsample_rows(rng, n, subsample):
    if subsample >= 1.0:
        return np.arange(n)
    k = max(2, int(round(subsample * n)))
    return np.sort(rng.choice(n, size=k, replace=False))


def _check_rate(learning_rate):
    if not 0 < learning_rate <= 1:
        raise ValueError(f"learning_rate must lie in (0, 1], got {learning_rate}")


def fit_gradient_boosting(X, y, n_rounds=100, learning_rate=0.1, max_depth=3,
                          min_samples_leaf=1, subsample=1.0, seed=0):
    """Gradient boosting on squared loss with variance-reduction trees.

    Each round fits a tree to the residuals, takes the line-search step
    (identically 1 for squared loss with mean-valued leaves) and adds the
    tree with shrinkage ``learning_rate``.
    """
    X, y = _validate_xy(X, y)
    _check_rate(learning_rate)
    n, p = X.shape
    base = float(np.mean(y))
    F = np.full(n, base)
    order = presort(X)
    trees, losses = [], [0.5 * float(((y - F) ** 2).sum())]
    for m in range(int(n_rounds)):
        rng, kernel_seed = _tree_streams(seed, m)
        rows = _subsample_rows(rng, n, subsample)
        resid = y - F
        f, t, l, r, v = _grow(X, -resid, rows, max_depth, min_samples_leaf, p, "best",
                              0.0, 0.0, kernel_seed, order)
        tree = RegressionTree(f, t, l, r, v, p, _depth(max_depth), int(min_samples_leaf))
        h = tree.predict(X)
        hh = float(h[rows] @ h[rows])
        if hh > 0.0:
            step = float(resid[rows] @ h[rows]) / hh
            if abs(step - 1.0) > 1e-6:
                raise RuntimeError(f"line search gave step {step}, expected 1 for squared loss")
        F = F + learning_rate * h
        trees.append(tree)
        losses.append(0.5 * float(((y - F) ** 2).sum()))
    params = dict(n_rounds=n_rounds, learning_rate=learning_rate, max_depth=max_depth,
                  min_samples_leaf=min_samples_leaf, subsample=subsample, seed=seed)
    return EnsembleModel("gbr", "boosting", tuple(trees), np.ones(len(trees)), p,
                         learning_rate, base, params, tuple(losses))


def fit_second_order_boosting(X, y, n_rounds=100, learning_rate=0.3, max_depth=6,
                              min_samples_leaf=1, reg_lambda=1.0, gamma=0.0,
                              subsample=1.0, seed=0):
    """Boosting with penalised second-order trees (XGBoost-style objective).

    Squared loss gives gradients ``F - y`` and unit hessians. Splits maximise
    the penalised gain and are rejected unless the gain is positive; leaves
    take the optimal weight ``-G / (H + reg_lambda)``.
    """
    X, y = _validate_xy(X, y)
    _check_rate(learning_rate)
    if reg_lambda < 0 or gamma < 0:
        raise ValueError("reg_lambda and gamma must be non-negative")
    n, p = X.shape
    base = float(np.mean(y))
    F = np.full(n, base)
    order = presort(X)
    trees, losses = [], [0.5 * float(((y - F) ** 2).sum())]
    for m in range(int(n_rounds)):
        rng, kernel_seed = _tree_streams(seed, m)
        rows = _subsample_rows(rng, n, subsample)
        f, t, l, r, v = _grow(X, F - y, rows, max_depth, min_samples_leaf, p, "best",
                              reg_lambda, gamma, kernel_seed, order)
        tree = RegressionTree(f, t, l, r, v, p, _depth(max_depth), int(min_samples_leaf))
        F = F + learning_rate * tree.predict(X)
        trees.append(tree)
        losses.append(0.5 * float(((y - F) ** 2).sum()))
    params = dict(n_rounds=n_rounds, learning_rate=learning_rate, max_depth=max_depth,
                  min_samples_leaf=min_samples_leaf, reg_lambda=reg_lambda, gamma=gamma,
                  subsample=subsample, seed=seed)
    return EnsembleModel("xgb", "boosting", tuple(trees), np.ones(len(trees)), p,
                         learning_rate, base, params, tuple(losses))


@dataclass(frozen=True)
class BinMapper:
    """Per-feature quantile bins fixed before boosting starts."""

    n_bins: np.ndarray
    cuts: tuple
    bin_lower: np.ndarray
    bin_upper: np.ndarray

    @classmethod
    def fit(cls, X, max_bins=255):
        if max_bins < 2:
            raise ValueError("n_bins must be at least 2")
        X = np.asarray(X, dtype=float)
        p = X.shape[1]
        cuts = []
        for j in range(p):
            u = np.unique(X[:, j])
            if u.shape[0] <= max_bins:
                c = u[:-1]
            else:
                q = np.quantile(X[:, j], np.linspace(0, 1, max_bins + 1)[1:-1])
                c = np.unique(q)
                c = c[c < u[-1]]
            cuts.append(c)
        width = max(len(c) for c in cuts) + 1
        n_bins = np.array([len(c) + 1 for c in cuts], dtype=np.intp)
        lower = np.zeros((p, width))
        upper = np.zeros((p, width))
        mapper = cls(n_bins, tuple(cuts), lower, upper)
        codes = mapper.transform(X)
        for j in range(p):
            for b in range(n_bins[j]):
                vals = X[codes[:, j] == b, j]
                if vals.size:
                    lower[j, b] = vals.min()
                    upper[j, b] = vals.max()
                else:
                    lower[j, b] = upper[j, b] = cuts[j][min(b, len(cuts[j]) - 1)]
        return mapper

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        codes = np.empty(X.shape, dtype=np.int32)
        for j, c in enumerate(self.cuts):
            # bin b holds cuts[b-1] < x <= cuts[b]
            codes[:, j] = np.searchsorted(c, X[:, j], side="left")
        return codes


def fit_histogram_boosting(X, y, n_rounds=100, learning_rate=0.1, n_bins=255,
                           max_leaves=31, max_depth=None, min_samples_leaf=20,
                           reg_lambda=0.0, gamma=0.0, subsample=1.0, seed=0):
    """Boosting with histogram splits and leaf-wise growth (LightGBM-style).

    Features are quantile-binned once; each tree repeatedly splits the leaf
    with the largest second-order gain until ``max_leaves`` is reached.
    """
    X, y = _validate_xy(X, y)
    _check_rate(learning_rate)
    if max_leaves < 1:
        raise ValueError("max_leaves must be at least 1")
    n, p = X.shape
    mapper = BinMapper.fit(X, n_bins)
    codes = mapper.transform(X)
    base = float(np.mean(y))
    F = np.full(n, base)
    trees, losses = [], [0.5 * float(((y - F) ** 2).sum())]
    for m in range(int(n_rounds)):
        rng, _ = _tree_streams(seed, m)
        rows = _subsample_rows(rng, n, subsample)
        f, t, l, r, v = _core.build_hist_tree(
            codes, mapper.n_bins, mapper.bin_lower, mapper.bin_upper, F - y, rows,
            int(max_leaves), _depth(max_depth), int(min_samples_leaf), float(reg_lambda),
            float(gamma))
        tree = RegressionTree(f, t, l, r, v, p, _depth(max_depth), int(min_samples_leaf))
        F = F + learning_rate * tree.predict(X)
        trees.append(tree)
        losses.append(0.5 * float(((y - F) ** 2).sum()))
    params = dict(n_rounds=n_rounds, learning_rate=learning_rate, n_bins=n_bins,
                  max_leaves=max_leaves, max_depth=max_depth,
                  min_samples_leaf=min_samples_leaf, reg_lambda=reg_lambda, gamma=gamma,
                  subsample=subsample, seed=seed)
    return EnsembleModel("lgbm", "boosting", tuple(trees), np.ones(len(trees)), p,
                         learning_rate, base, params, tuple(losses))
