import json

import numpy as np
import pytest

from catcoupon.regressors import (ALGORITHMS, DEFAULT_SPACES, MODEL_ORDER, Choice, IntRange,
                                  LogUniform, ModelFormatError, SearchSpec, Uniform, dumps,
                                  fit_algorithm, kfold_indices, loads, random_search_cv, rmse)
from catcoupon.regressors.serialize import FORMAT_VERSION, model_to_dict


def _data(seed=0, n=80):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    return X, X[:, 0] - 0.5 * X[:, 2] + 0.2 * rng.normal(size=n)


def test_model_order():
    assert MODEL_ORDER == ("ols", "rf", "brr", "gbr", "etr", "ard", "lgbm", "xgb")


def test_kfold_contiguous_by_default():
    folds = kfold_indices(10, 5)
    assert [v.tolist() for _, v in folds] == [[0, 1], [2, 3], [4, 5], [6, 7], [8, 9]]
    for train, val in folds:
        assert sorted(np.concatenate([train, val]).tolist()) == list(range(10))


def test_kfold_shuffled_partition():
    folds = kfold_indices(23, 5, shuffle_seed=4)
    vals = np.concatenate([v for _, v in folds])
    assert sorted(vals.tolist()) == list(range(23))
    assert [v.tolist() for _, v in folds] != [v.tolist() for _, v in kfold_indices(23, 5)]


def test_kfold_errors():
    with pytest.raises(ValueError, match="at least 2 folds"):
        kfold_indices(10, 1)
    with pytest.raises(ValueError, match="fold 0 has 1 rows"):
        kfold_indices(9, 5)


def test_distributions_within_bounds():
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert 2 <= IntRange(2, 12).draw(rng) <= 12
        assert 0.01 <= Uniform(0.01, 0.3).draw(rng) <= 0.3
        assert 1e-6 <= LogUniform(1e-6, 1e3).draw(rng) <= 1e3
        assert Choice(("a", "b")).draw(rng) in ("a", "b")


def test_default_spaces_cover_algorithms():
    assert set(DEFAULT_SPACES) == set(ALGORITHMS)
    assert DEFAULT_SPACES["brr"]["alpha"] == LogUniform(1e-6, 1e3)
    assert DEFAULT_SPACES["rf"]["n_trees"] == IntRange(100, 1000)


def test_single_draw_returned():
    X, y = _data()
    spec = SearchSpec(candidates=({"alpha": 2.0, "lam": 0.5},))
    res = random_search_cv(X, y, "brr", spec)
    assert res.best_params == {"alpha": 2.0, "lam": 0.5}
    assert res.fold_scores.shape == (1, 5)


def test_dominated_draw_loses():
    X, y = _data(1)
    spec = SearchSpec(candidates=({"n_rounds": 1, "learning_rate": 0.01},
                                  {"n_rounds": 60, "learning_rate": 0.2}))
    res = random_search_cv(X, y, "gbr", spec)
    assert np.all(res.fold_scores[1] < res.fold_scores[0])
    assert res.best_params["n_rounds"] == 60


def test_ties_go_to_earlier_draw():
    X, y = _data(2)
    same = {"alpha": 1.0, "lam": 1.0}
    res = random_search_cv(X, y, "brr", SearchSpec(candidates=(same, dict(same))))
    assert res.best_params is not None and res.fold_scores[0, 0] == res.fold_scores[1, 0]
    assert res.best_score == float(res.fold_scores[0].mean())


def test_search_deterministic():
    X, y = _data(3)
    spec = SearchSpec(DEFAULT_SPACES["brr"], n_draws=20, seed=11)
    a = random_search_cv(X, y, "brr", spec)
    b = random_search_cv(X, y, "brr", spec)
    assert a.best_params == b.best_params and a.best_score == b.best_score
    assert np.array_equal(a.fold_scores, b.fold_scores)


def test_refit_on_full_training():
    X, y = _data(4)
    res = random_search_cv(X, y, "ols", SearchSpec())
    direct = fit_algorithm("ols", X, y, {})
    assert np.array_equal(res.model.predict(X), direct.predict(X))


def test_fold_scores_are_out_of_fold_rmse():
    X, y = _data(5, n=50)
    res = random_search_cv(X, y, "ols", SearchSpec(folds=5))
    for k, (train, val) in enumerate(kfold_indices(50, 5)):
        m = fit_algorithm("ols", X[train], y[train], {})
        assert res.fold_scores[0, k] == pytest.approx(rmse(y[val], m.predict(X[val])), rel=1e-12)


def test_unknown_algorithm():
    with pytest.raises(ValueError, match="unknown algorithm"):
        fit_algorithm("svm", np.zeros((3, 1)), np.zeros(3), {})


# serialisation -----------------------------------------------------------------------

@pytest.mark.parametrize("algorithm", MODEL_ORDER)
def test_round_trip_predictions(algorithm):
    X, y = _data(6)
    small = {"rf": {"n_trees": 5}, "etr": {"n_trees": 5}, "gbr": {"n_rounds": 10},
             "xgb": {"n_rounds": 10}, "lgbm": {"n_rounds": 10, "min_samples_leaf": 5}}
    model = fit_algorithm(algorithm, X, y, small.get(algorithm, {}), seed=1)
    back = loads(dumps(model))
    assert back.algorithm == algorithm
    assert np.array_equal(back.predict(X), model.predict(X))
    assert dumps(back) == dumps(model)


def test_artifact_is_self_describing():
    X, y = _data(7)
    d = json.loads(dumps(fit_algorithm("xgb", X, y, {"n_rounds": 3})))
    assert d["format_version"] == FORMAT_VERSION
    assert d["algorithm"] == "xgb" and d["type"] == "ensemble"
    assert d["params"]["n_rounds"] == 3


def test_newer_format_rejected():
    X, y = _data(8)
    d = model_to_dict(fit_algorithm("ols", X, y, {}))
    d["format_version"] = FORMAT_VERSION + 1
    with pytest.raises(ModelFormatError, match="newer"):
        loads(json.dumps(d))
    with pytest.raises(ModelFormatError, match="format_version"):
        loads("{}")
    d["format_version"] = 1
    d["type"] = "svm"
    with pytest.raises(ModelFormatError, match="unknown model type"):
        loads(json.dumps(d))
