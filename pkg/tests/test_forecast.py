import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catcoupon.forecast import (calibrate, parse_predictive_csv, point_metrics,
                                predictive_csv, predictive_distribution, split_80_10_10,
                                split_sizes, var_forecast)


@pytest.mark.parametrize("n, sizes", [(100, (80, 10, 10)), (734, (588, 73, 73)),
                                      (30, (24, 3, 3)), (39, (33, 3, 3))])
def test_split_sizes(n, sizes):
    assert split_sizes(n) == sizes
    assert split_80_10_10(n).sizes == sizes


def test_split_chronological_blocks():
    s = split_80_10_10(100)
    assert s.train.tolist() == list(range(80))
    assert s.calibration.tolist() == list(range(80, 90))
    assert s.test.tolist() == list(range(90, 100))


def test_split_random_deterministic():
    a, b = split_80_10_10(200, "random", seed=5), split_80_10_10(200, "random", seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(
        (a.train, a.calibration, a.test), (b.train, b.calibration, b.test)))
    c = split_80_10_10(200, "random", seed=6)
    assert not np.array_equal(a.test, c.test)


def test_split_errors():
    with pytest.raises(ValueError, match="at least 30"):
        split_80_10_10(29)
    with pytest.raises(ValueError, match="seed"):
        split_80_10_10(50, "random")
    with pytest.raises(ValueError, match="unknown split"):
        split_80_10_10(50, "blocked")


@settings(max_examples=200)
@given(st.integers(30, 5000), st.sampled_from(["chrono", "random"]), st.integers(0, 99))
def test_split_partition_property(n, mode, seed):
    s = split_80_10_10(n, mode, seed=seed)
    parts = (s.train, s.calibration, s.test)
    allrows = np.concatenate(parts)
    assert np.array_equal(np.sort(allrows), np.arange(n))
    # floor sizing: small parts lose under one row each, training absorbs it
    for part in (s.calibration, s.test):
        assert 0 <= 0.1 * n - len(part) < 1
    assert 0 <= len(s.train) - 0.8 * n < 2
    for part in parts:
        assert np.all(np.diff(part) > 0)


# point metrics -----------------------------------------------------------------------

def test_perfect_prediction():
    y = np.array([1.0, 2.0, 4.0])
    m = point_metrics(y, y)
    assert (m.mse, m.mae, m.rmse, m.r2) == (0.0, 0.0, 0.0, 1.0)


@pytest.mark.parametrize("mse, rmse", [(0.000315, 0.017748), (0.000283, 0.016823)])
def test_reference_rmse_from_mse(mse, rmse):
    e = math.sqrt(mse)
    m = point_metrics(np.array([e, -e]), np.zeros(2))
    assert m.mse == pytest.approx(mse, rel=1e-12)
    assert round(m.rmse, 6) == rmse


def test_metrics_hand_values():
    m = point_metrics([1.0, 2.0, 3.0, 4.0], [1.5, 2.0, 2.0, 5.0])
    assert m.mse == pytest.approx((0.25 + 0 + 1 + 1) / 4)
    assert m.mae == pytest.approx(2.5 / 4)
    assert m.r2 == pytest.approx(1 - 2.25 / 5.0)


def test_r2_undefined_for_constant_target():
    m = point_metrics([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
    assert not m.r2_defined and math.isnan(m.r2)
    assert m.mse == pytest.approx(2 / 3)


def test_metrics_errors():
    with pytest.raises(ValueError, match="length mismatch"):
        point_metrics([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        point_metrics([], [])


@settings(max_examples=200)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50), st.integers(0, 10**6))
def test_rmse_squared_is_mse(values, seed):
    y = np.array(values)
    pred = y + np.random.default_rng(seed).normal(size=y.size)
    m = point_metrics(y, pred)
    assert m.rmse ** 2 == pytest.approx(m.mse, rel=4e-16, abs=1e-300)
    assert m.rmse == math.sqrt(m.mse)


# calibration -------------------------------------------------------------------------

def test_calibrate_three_residuals():
    c = calibrate([-1.0, 0.0, 1.0], min_count=3)
    assert c.mean == 0.0 and c.std == 1.0


def test_calibrate_needs_five_by_default():
    with pytest.raises(ValueError, match="at least 5"):
        calibrate([-1.0, 0.0, 1.0])


def test_calibrate_symmetric_median():
    c = calibrate([-3.0, -1.0, 0.5, -0.5, 1.0, 3.0])
    assert c.quantile(0.5) == 0.0
    assert np.all(np.diff(c.quantiles) >= 0)


def test_calibrate_rejects_equal_residuals():
    with pytest.raises(ValueError, match="all equal"):
        calibrate(np.full(10, 0.3))


def test_calibrate_sampling_distribution():
    # mean and std of 20 normal draws fall within 3 standard errors, checked
    # over many independent samples
    mu, sigma, n = 0.4, 2.0, 20
    inside = 0
    for seed in range(500):
        c = calibrate(np.random.default_rng(seed).normal(mu, sigma, n))
        ok_mean = abs(c.mean - mu) <= 3 * sigma / math.sqrt(n)
        ok_std = abs(c.std - sigma) <= 3 * sigma / math.sqrt(2 * (n - 1))
        inside += ok_mean and ok_std
    assert inside >= 490


def test_calibrate_quantiles_linear_interpolation():
    c = calibrate([0.0, 1.0, 2.0, 3.0, 4.0], probabilities=(0.05, 0.5, 0.95))
    assert c.quantiles.tolist() == pytest.approx([0.2, 2.0, 3.8])


# predictive distributions ------------------------------------------------------------

def _calib(mean=0.0, std=1.0):
    r = np.array([-1.0, 1.0, -1.0, 1.0, 0.0])
    c = calibrate(r)
    return type(c)(c.residuals, mean, std, c.probabilities, c.quantiles)


def test_degenerate_spread():
    pts = np.array([1.0, -2.0, 5.0])
    d = predictive_distribution(pts, _calib(0.3, 1e-12), n_draws=1000, seed=1)
    assert np.allclose(d.values, (pts + 0.3)[:, None], atol=1e-10)


def test_percentiles_ordered():
    d = predictive_distribution(np.linspace(-1, 1, 50), _calib(0.1, 0.5), seed=2)
    assert np.all(d.percentile(5) <= d.percentile(50))
    assert np.all(d.percentile(50) <= d.percentile(95))


def test_interval_width_matches_normal_quantiles():
    d = predictive_distribution(np.zeros(5), _calib(0.0, 1.0), n_draws=200_000, seed=3)
    width = d.percentile(95) - d.percentile(5)
    assert np.all(np.abs(width / 3.29 - 1) < 0.05)


def test_predictive_deterministic_and_row_local():
    pts = np.arange(10.0)
    a = predictive_distribution(pts, _calib(), seed=4)
    b = predictive_distribution(pts, _calib(), seed=4)
    assert np.array_equal(a.samples, b.samples)
    head = predictive_distribution(pts[:3], _calib(), seed=4)
    assert np.array_equal(head.samples, a.samples[:3])


def test_too_few_draws():
    with pytest.raises(ValueError, match="n_draws"):
        predictive_distribution(np.zeros(3), _calib(), n_draws=99)


@settings(max_examples=50)
@given(st.floats(-100, 100), st.integers(0, 1000))
def test_constant_shift(c, seed):
    pts = np.random.default_rng(seed).normal(size=8)
    a = predictive_distribution(pts, _calib(0.2, 0.7), seed=seed)
    b = predictive_distribution(pts + c, _calib(0.2, 0.7), seed=seed)
    # exact up to the rounding of the additions, whose operands can be
    # larger than the result when the point and the error quantile cancel
    q = a.values - pts[:, None]
    scale = np.abs(pts)[:, None] + abs(c) + np.abs(q)
    assert np.all(np.abs(b.values - (a.values + c)) <= 4 * np.finfo(float).eps * scale)


def test_var_modes():
    pts = np.array([0.0, 1.0])
    calib = _calib(0.0, 1.0)
    d = predictive_distribution(pts, calib, n_draws=100_000, seed=5)
    sim = var_forecast(pts, calib, 0.05, "simulated", d)
    ana = var_forecast(pts, calib, 0.05, "analytic")
    emp = var_forecast(pts, calib, 0.05, "empirical")
    assert np.allclose(sim, d.percentile(5))
    assert np.allclose(ana, pts - 1.6448536269514722)
    assert np.allclose(sim, ana, atol=0.03)
    assert np.allclose(emp, pts + calib.quantile(0.05))
    with pytest.raises(ValueError):
        var_forecast(pts, calib, 0.05, "simulated")
    with pytest.raises(ValueError):
        var_forecast(pts, calib, 0.05, "kernel")


def test_predictive_csv_round_trip():
    pts = np.array([0.01, 0.02, 0.03])
    d = predictive_distribution(pts, _calib(0.0, 0.01), seed=6)
    text = predictive_csv(d, [0.011, 0.019, 0.05], ["2020-01", "2020-02", "2020-03"],
                          row_ids=[7, 8, 9])
    assert text.splitlines()[0] == "row_id,date,y_true,point,p5,p50,p95"
    back = parse_predictive_csv(text)
    assert back["row_id"].tolist() == [7, 8, 9]
    assert np.array_equal(back["p5"], d.percentile(5))
    assert np.array_equal(back["point"], pts)
    with pytest.raises(ValueError, match="row mismatch"):
        predictive_csv(d, [0.0], ["2020-01"])
    with pytest.raises(ValueError, match="header"):
        parse_predictive_csv("a,b\n1,2\n")
