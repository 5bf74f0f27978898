"""Regression algorithms behind a common ``fit_*(X, y, ...)`` / ``predict`` contract."""
from .linear import (BayesianLinearModel, IllConditionedError, LinearModel, RankWarning,
                     ard_step, fit_ard, fit_bayesian_ridge, fit_ols, posterior)
from .search import (ALGORITHMS, DEFAULT_SPACES, MODEL_ORDER, Choice, IntRange, LogUniform,
                     SearchResult, SearchSpec, Uniform, fit_algorithm, kfold_indices,
                     random_search_cv, rmse)
from .serialize import FORMAT_VERSION, ModelFormatError, dumps, loads
from .trees import (BinMapper, EnsembleModel, RegressionTree, fit_extra_trees, fit_forest,
                    fit_gradient_boosting, fit_histogram_boosting, fit_second_order_boosting,
                    fit_tree, leaf_weight, resolve_max_features, split_gain,
                    variance_reduction)


def predict(model, X):
    """Predictions of any fitted model; raises on a column-count mismatch."""
    return model.predict(X)
