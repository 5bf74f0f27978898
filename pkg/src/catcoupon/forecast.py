"""Train/calibration/test protocol, point metrics and Monte Carlo predictive
distributions built from calibration-window residuals."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

MIN_SPLIT_ROWS = 30
MIN_CALIBRATION_RESIDUALS = 5
MIN_DRAWS = 100
DEFAULT_PERCENTILES = (5.0, 50.0, 95.0)
PREDICTIVE_HEADER = ("row_id", "date", "y_true", "point", "p5", "p50", "p95")


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    calibration: np.ndarray
    test: np.ndarray

    @property
    def sizes(self):
        return len(self.train), len(self.calibration), len(self.test)


def split_sizes(n):
    """(train, calibration, test) sizes for an 80:10:10 split.

    The two small parts get ``floor(0.1 n)`` rows each and the remainder
    goes to training.
    """
    c = n // 10
    return n - 2 * c, c, c


def split_80_10_10(n, mode="chrono", seed=None):
    """Partition ``range(n)`` into train, calibration and test parts.

    ``mode="chrono"`` keeps rows in order (earliest to training, latest to
    test); ``mode="random"`` permutes rows with ``seed`` first and returns
    each part sorted.
    """
    if n < MIN_SPLIT_ROWS:
        raise ValueError(f"need at least {MIN_SPLIT_ROWS} rows to split, got {n}")
    n_train, n_cal, _ = split_sizes(n)
    if mode in ("chrono", "chronological"):
        order = np.arange(n)
    elif mode == "random":
        if seed is None:
            raise ValueError("random split needs a seed")
        order = np.random.default_rng(seed).permutation(n)
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    parts = (order[:n_train], order[n_train:n_train + n_cal], order[n_train + n_cal:])
    if mode == "random":
        parts = tuple(np.sort(p) for p in parts)
    return SplitIndices(*parts)


@dataclass(frozen=True)
class PointMetrics:
    mse: float
    mae: float
    rmse: float
    r2: float  # nan when undefined
    r2_defined: bool

    def as_dict(self):
        return {"mse": self.mse, "mae": self.mae, "rmse": self.rmse, "r2": self.r2}


def point_metrics(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise ValueError("need at least one observation")
    err = y_true - y_pred
    mse = float(np.mean(err * err))
    mae = float(np.mean(np.abs(err)))
    dev = y_true - y_true.mean()
    sst = float(dev @ dev)
    if sst > 0.0:
        r2, defined = 1.0 - float(err @ err) / sst, True
    else:
        r2, defined = math.nan, False
    return PointMetrics(mse, mae, math.sqrt(mse), r2, defined)


@dataclass(frozen=True)
class ResidualCalibration:
    """Normal fit and empirical quantiles of calibration-window residuals,
    where a residual is ``y_true - point``."""

    residuals: np.ndarray
    mean: float
    std: float
    probabilities: tuple
    quantiles: np.ndarray

    def quantile(self, prob):
        return float(np.quantile(self.residuals, prob))


def calibrate(residuals, probabilities=(0.05, 0.5, 0.95),
              min_count=MIN_CALIBRATION_RESIDUALS):
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 1 or r.size < min_count:
        raise ValueError(f"need at least {min_count} residuals, got {r.size}")
    if not np.isfinite(r).all():
        raise ValueError("non-finite residuals")
    std = float(np.std(r, ddof=1))
    if np.all(r == r[0]) or not std > 0.0:
        raise ValueError("residuals are all equal; error spread is zero")
    probs = tuple(float(p) for p in probabilities)
    return ResidualCalibration(r.copy(), float(r.mean()), std, probs,
                               np.quantile(r, probs))


@dataclass(frozen=True)
class PredictiveDistribution:
    points: np.ndarray
    samples: np.ndarray  # (rows, draws)
    percentiles: tuple
    values: np.ndarray  # (rows, len(percentiles))
    seed: int

    def percentile(self, q):
        return self.values[:, self.percentiles.index(float(q))]


def predictive_distribution(points, calib, n_draws=1000, seed=0,
                            percentiles=DEFAULT_PERCENTILES):
    """Simulate outcomes as point forecast plus Normal(mean, std^2) errors.

    Row ``i`` draws from its own stream seeded by ``(seed, i)``, so a row's
    sample does not depend on how many rows are simulated. Percentiles are
    taken of the error sample (linear interpolation) and then added to the
    point forecast.
    """
    if n_draws < MIN_DRAWS:
        raise ValueError(f"n_draws={n_draws} < {MIN_DRAWS}; quantiles would be unstable")
    if not calib.std > 0.0:
        raise ValueError("calibration std must be positive")
    points = np.asarray(points, dtype=float)
    qs = tuple(float(q) for q in percentiles)
    noise = np.empty((points.size, n_draws))
    for i in range(points.size):
        rng = np.random.default_rng([seed, i])
        noise[i] = rng.normal(calib.mean, calib.std, n_draws)
    values = points[:, None] + np.percentile(noise, qs, axis=1).T
    return PredictiveDistribution(points, points[:, None] + noise, qs, values, seed)


def var_forecast(points, calib, level=0.05, mode="simulated", dist=None):
    """Lower-tail VaR forecast per row.

    ``simulated`` reads the level percentile of ``dist``; ``analytic`` uses
    the fitted normal quantile; ``empirical`` adds the calibration-window
    residual quantile to the point forecast.
    """
    points = np.asarray(points, dtype=float)
    if mode == "simulated":
        if dist is None:
            raise ValueError("simulated VaR needs a predictive distribution")
        q = 100.0 * level
        if q in dist.percentiles:
            return dist.percentile(q).copy()
        return dist.points + np.percentile(dist.samples - dist.points[:, None], q, axis=1)
    if mode == "analytic":
        return points + calib.mean + calib.std * NormalDist().inv_cdf(level)
    if mode == "empirical":
        return points + calib.quantile(level)
    raise ValueError(f"unknown VaR mode {mode!r}")


def predictive_csv(dist, y_true, dates, row_ids=None):
    """Predictive rows as CSV text with a fixed header."""
    y_true = np.asarray(y_true, dtype=float)
    n = dist.points.size
    if y_true.size != n or len(dates) != n:
        raise ValueError(f"row mismatch: {n} forecasts, {y_true.size} actuals, "
                         f"{len(dates)} dates")
    if row_ids is None:
        row_ids = range(n)
    p5, p50, p95 = (dist.percentile(q) for q in DEFAULT_PERCENTILES)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PREDICTIVE_HEADER)
    for i, rid in enumerate(row_ids):
        w.writerow([int(rid), str(dates[i]), repr(float(y_true[i])), repr(float(dist.points[i])),
                    repr(float(p5[i])), repr(float(p50[i])), repr(float(p95[i]))])
    return buf.getvalue()


def parse_predictive_csv(text):
    """Inverse of :func:`predictive_csv`; returns a dict of column arrays."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty predictive file")
    header = tuple(h.strip() for h in rows[0])
    if header != PREDICTIVE_HEADER:
        raise ValueError(f"unexpected predictive header {header}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValueError("predictive file has no rows")
    out = {"row_id": np.array([int(r[0]) for r in body]), "date": [r[1] for r in body]}
    for j, name in enumerate(PREDICTIVE_HEADER[2:], start=2):
        try:
            out[name] = np.array([float(r[j]) for r in body])
        except (ValueError, IndexError) as exc:
            raise ValueError(f"bad value in column {name}: {exc}") from None
    return out
