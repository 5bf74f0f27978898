"""Randomized hyperparameter search with k-fold cross-validation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linear import fit_ard, fit_bayesian_ridge, fit_ols
from .trees import (fit_extra_trees, fit_forest, fit_gradient_boosting,
                    fit_histogram_boosting, fit_second_order_boosting)


@dataclass(frozen=True)
class IntRange:
    low: int
    high: int  # inclusive

    def draw(self, rng):
        return int(rng.integers(self.low, self.high + 1))


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def draw(self, rng):
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class LogUniform:
    low: float
    high: float

    def draw(self, rng):
        return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))


@dataclass(frozen=True)
class Choice:
    options: tuple

    def draw(self, rng):
        return self.options[int(rng.integers(len(self.options)))]


ALGORITHMS = {
    "ols": fit_ols,
    "rf": fit_forest,
    "brr": fit_bayesian_ridge,
    "gbr": fit_gradient_boosting,
    "etr": fit_extra_trees,
    "ard": fit_ard,
    "lgbm": fit_histogram_boosting,
    "xgb": fit_second_order_boosting,
}
MODEL_ORDER = tuple(ALGORITHMS)

_TREE_SPACE = {
    "n_trees": IntRange(100, 1000),
    "max_depth": IntRange(2, 12),
    "max_features": Choice(("sqrt", "third", "all")),
}
_BAYES = LogUniform(1e-6, 1e3)

DEFAULT_SPACES = {
    "ols": {},
    "rf": dict(_TREE_SPACE),
    "etr": dict(_TREE_SPACE),
    "brr": {"alpha": _BAYES, "lam": _BAYES},
    "ard": {"alpha_init": _BAYES, "lambda_init": _BAYES},
    "gbr": {"n_rounds": IntRange(50, 1000), "learning_rate": Uniform(0.01, 0.3),
            "max_depth": IntRange(2, 6), "subsample": Uniform(0.5, 1.0)},
    "xgb": {"n_rounds": IntRange(50, 1000), "learning_rate": Uniform(0.01, 0.3),
            "max_depth": IntRange(2, 6), "reg_lambda": Uniform(0.0, 10.0),
            "gamma": Uniform(0.0, 5.0), "subsample": Uniform(0.5, 1.0)},
    "lgbm": {"n_rounds": IntRange(50, 1000), "learning_rate": Uniform(0.01, 0.3),
             "n_bins": IntRange(32, 255), "max_leaves": IntRange(4, 63),
             "min_samples_leaf": IntRange(5, 40), "reg_lambda": Uniform(0.0, 10.0),
             "subsample": Uniform(0.5, 1.0)},
}
# algorithms that take a seed argument
_SEEDED = {"rf", "etr", "gbr", "xgb", "lgbm"}


@dataclass(frozen=True)
class SearchSpec:
    space: dict = field(default_factory=dict)
    n_draws: int = 20
    folds: int = 5
    seed: int = 0
    # None for contiguous chronological folds, else the shuffling seed
    shuffle_seed: int = None
    # explicit configurations evaluated instead of random draws
    candidates: tuple = None

    def draws(self):
        if self.candidates is not None:
            return [dict(c) for c in self.candidates]
        if not self.space:
            return [{}]
        rng = np.random.default_rng(self.seed)
        names = sorted(self.space)
        return [{k: self.space[k].draw(rng) for k in names} for _ in range(self.n_draws)]


@dataclass(frozen=True)
class SearchResult:
    algorithm: str
    best_params: dict
    best_score: float
    draws: tuple
    fold_scores: np.ndarray  # (draw, fold) RMSE
    model: object


def rmse(y_true, y_pred):
    d = np.asarray(y_true, dtype=float) - np.asarray(y_pred, dtype=float)
    return math.sqrt(float(d @ d) / d.shape[0])


def kfold_indices(n, folds, shuffle_seed=None):
    """(train, validation) index pairs; contiguous blocks unless shuffled."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    order = np.arange(n)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(n)
    bounds = np.linspace(0, n, folds + 1).astype(int)
    out = []
    for i in range(folds):
        val = np.sort(order[bounds[i]:bounds[i + 1]])
        if val.size < 2:
            raise ValueError(f"fold {i} has {val.size} rows; need at least 2")
        train = np.sort(np.concatenate([order[:bounds[i]], order[bounds[i + 1]:]]))
        out.append((train, val))
    return out


def fit_algorithm(algorithm, X, y, params, seed=0):
    try:
        fit = ALGORITHMS[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}") from None
    kwargs = dict(params)
    if algorithm in _SEEDED:
        kwargs.setdefault("seed", seed)
    return fit(X, y, **kwargs)


def random_search_cv(X, y, algorithm, search=None, metric=rmse):
    """Pick the configuration with the lowest mean out-of-fold score.

    Ties go to the earlier draw. The winner is refitted on all rows.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if search is None:
        search = SearchSpec(DEFAULT_SPACES[algorithm])
    if search.n_draws < 1:
        raise ValueError("need at least one draw")
    folds = kfold_indices(len(y), search.folds, search.shuffle_seed)
    draws = search.draws()
    scores = np.empty((len(draws), len(folds)))
    for d, params in enumerate(draws):
        for k, (train, val) in enumerate(folds):
            model = fit_algorithm(algorithm, X[train], y[train], params, seed=search.seed)
            scores[d, k] = metric(y[val], model.predict(X[val]))
    mean = scores.mean(axis=1)
    best = int(np.argmin(mean))
    model = fit_algorithm(algorithm, X, y, draws[best], seed=search.seed)
    return SearchResult(algorithm, draws[best], float(mean[best]), tuple(draws), scores, model)
