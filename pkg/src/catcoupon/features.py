"""Lagged climate joins, lag correlations and design matrices."""
from __future__ import annotations

import io
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _core
from .dataset import DataError, Dataset, shift_month

log = logging.getLogger(__name__)

BENCHMARK_COLUMNS = (
    "expected_loss", "size", "term", "trigger_indemnity", "wind", "earthquake",
    "multiterritory", "us", "europe", "japan", "us_wind", "us_eq", "europe_wind",
    "japan_eq", "sponsor_swiss_re", "investment_grade", "rol_index", "bb_spread",
)
EXTENDED_COLUMNS = BENCHMARK_COLUMNS + ("rol_index_change", "soi_lag15", "olr_lag12")
CONTINUOUS_COLUMNS = frozenset({
    "expected_loss", "size", "term", "rol_index", "bb_spread", "rol_index_change",
    "soi_lag15", "olr_lag12",
})
# climate column -> (series name, lag in months)
CLIMATE_TERMS = {"soi_lag15": ("SOI", 15), "olr_lag12": ("OLR", 12)}
FEATURE_SPECS = {"benchmark": BENCHMARK_COLUMNS, "extended": EXTENDED_COLUMNS}


class LagResolutionError(DataError):
    pass


class ZeroVarianceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    columns: tuple
    X: np.ndarray
    y: np.ndarray
    row_dates: tuple
    # column -> (mean, std); identity for columns left unscaled
    standardization: dict = field(default_factory=dict)
    dropped: tuple = ()
    warnings: tuple = ()
    # rows whose rol_index_change fell back to the earliest available difference
    flagged_rows: tuple = ()

    @property
    def shape(self):
        return self.X.shape

    def column(self, name):
        return self.X[:, self.columns.index(name)]

    def take_rows(self, rows):
        rows = np.asarray(rows, dtype=np.intp)
        return replace(self, X=self.X[rows], y=self.y[rows],
                       row_dates=tuple(self.row_dates[i] for i in rows))

    def select(self, names):
        idx = [self.columns.index(c) for c in names]
        return replace(self, columns=tuple(names), X=self.X[:, idx],
                       standardization={c: self.standardization[c] for c in names
                                        if c in self.standardization})

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(("issue_date",) + self.columns + ("final_spread",)) + "\n")
        for d, row, t in zip(self.row_dates, self.X, self.y):
            buf.write(",".join([d.isoformat()] + [repr(float(v)) for v in row]
                               + [repr(float(t))]) + "\n")
        return buf.getvalue()


@dataclass(frozen=True)
class LagCorrelationTable:
    index: str
    lag_min: int
    lag_max: int
    # lag -> correlation, NaN where undefined
    correlations: dict

    @property
    def undefined(self):
        return tuple(k for k, v in self.correlations.items() if math.isnan(v))

    def peak_lag(self, absolute=False):
        defined = {k: v for k, v in self.correlations.items() if not math.isnan(v)}
        if not defined:
            return None
        key = (lambda k: abs(defined[k])) if absolute else (lambda k: defined[k])
        return max(sorted(defined), key=key)

    def to_csv(self):
        lines = ["index,lag,correlation"]
        for lag in range(self.lag_min, self.lag_max + 1):
            v = self.correlations[lag]
            lines.append(f"{self.index},{lag},{'' if math.isnan(v) else repr(v)}")
        return "\n".join(lines) + "\n"


def lag_join(tranches, series, lag):
    """Series value at each tranche's issue month shifted back by ``lag`` months."""
    if not 0 <= lag <= 18:
        raise ValueError(f"lag must lie in 0..18, got {lag}")
    out = np.empty(len(tranches))
    for i, t in enumerate(tranches):
        ym = shift_month(t.issue_date.year, t.issue_date.month, -lag)
        try:
            out[i] = series.value_at(*ym)
        except KeyError:
            raise LagResolutionError(
                f"{series.name} has no value for {ym[0]}-{ym[1]:02d} "
                f"(row {i}, lag {lag})") from None
    return out


def pearson(a, b):
    """Pearson correlation; NaN when either vector has zero variance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da = a - a.mean()
    db = b - b.mean()
    sa = math.sqrt(float(da @ da))
    sb = math.sqrt(float(db @ db))
    if sa == 0.0 or sb == 0.0:
        return math.nan
    r = float(da @ db) / (sa * sb)
    return min(1.0, max(-1.0, r))


def lagged_correlations(tranches, series, lag_min, lag_max):
    if len(tranches) < 3:
        raise ValueError("need at least 3 tranches")
    if not 0 <= lag_min <= lag_max <= 18:
        raise ValueError(f"invalid lag range {lag_min}..{lag_max}")
    y = np.array([t.final_spread for t in tranches])
    corr = {}
    for lag in range(lag_min, lag_max + 1):
        corr[lag] = pearson(y, lag_join(tranches, series, lag))
        if math.isnan(corr[lag]):
            log.warning("%s: correlation undefined at lag %d (zero variance)", series.name, lag)
    return LagCorrelationTable(series.name, lag_min, lag_max, corr)


def _rol_index_change(tranches):
    """12-month change of the ROL index matched by issuance month.

    The ROL level of a month is the mean over tranches issued in it; a
    month without issuance carries the latest earlier level forward. Rows
    whose comparison month precedes the data take the earliest available
    12-month difference and are returned as flagged.
    """
    months = {}
    for t in tranches:
        months.setdefault(t.year_month, []).append(t.rol_index)
    keys = sorted(months)
    first = keys[0]
    k0 = first[0] * 12 + first[1] - 1
    k1 = keys[-1][0] * 12 + keys[-1][1] - 1
    level = np.empty(k1 - k0 + 1)
    current = math.nan
    for k in range(k0, k1 + 1):
        ym = (k // 12, k % 12 + 1)
        if ym in months:
            current = float(np.mean(months[ym]))
        level[k - k0] = current

    out = np.empty(len(tranches))
    flagged = []
    fallback = None
    if k1 - k0 >= 12:
        fallback = level[12] - level[0]
    for i, t in enumerate(tranches):
        k = t.issue_date.year * 12 + t.issue_date.month - 1 - k0
        if k >= 12:
            out[i] = level[k] - level[k - 12]
        else:
            out[i] = fallback if fallback is not None else 0.0
            flagged.append(i)
    return out, tuple(flagged)


def _raw_columns(dataset, columns):
    ts = dataset.tranches
    cols = {}

    def col(fn):
        return np.array([float(fn(t)) for t in ts])

    cols["expected_loss"] = col(lambda t: t.expected_loss)
    cols["size"] = col(lambda t: t.size)
    cols["term"] = col(lambda t: t.term)
    cols["trigger_indemnity"] = col(lambda t: t.trigger_indemnity)
    cols["wind"] = col(lambda t: t.peril_type == "storm" or (
        t.peril_type == "multiperil"
        and bool({"us_wind", "europe_wind"} & t.region_peril_flags)))
    cols["earthquake"] = col(lambda t: t.peril_type == "earthquake" or (
        t.peril_type == "multiperil"
        and bool({"us_eq", "japan_eq"} & t.region_peril_flags)))
    cols["multiterritory"] = col(lambda t: t.territory == "multi")
    cols["us"] = col(lambda t: t.territory == "us")
    cols["europe"] = col(lambda t: t.territory == "europe")
    cols["japan"] = col(lambda t: t.territory == "japan")
    for flag in ("us_wind", "us_eq", "europe_wind", "japan_eq"):
        cols[flag] = col(lambda t, f=flag: f in t.region_peril_flags)
    cols["sponsor_swiss_re"] = col(lambda t: t.sponsor_swiss_re)
    cols["investment_grade"] = col(lambda t: t.investment_grade)
    cols["rol_index"] = col(lambda t: t.rol_index)
    cols["bb_spread"] = col(lambda t: t.bb_spread)
    flagged = ()
    if "rol_index_change" in columns:
        cols["rol_index_change"], flagged = _rol_index_change(ts)
    for name, (series, lag) in CLIMATE_TERMS.items():
        if name in columns:
            if series not in dataset.climate:
                raise DataError(f"feature {name} needs climate series {series!r}")
            cols[name] = lag_join(ts, dataset.climate[series], lag)
    return cols, flagged


def build_features(dataset: Dataset, spec="extended", standardization=None, fit_rows=None):
    """Design matrix for the ``benchmark`` or ``extended`` feature set.

    Continuous columns are standardized with the supplied ``standardization``
    (column -> (mean, std)), or with statistics computed on ``fit_rows``
    (all rows when omitted). Columns constant over those rows are dropped
    with a :class:`ZeroVarianceWarning`.
    """
    try:
        columns = FEATURE_SPECS[spec]
    except KeyError:
        raise ValueError(f"unknown feature spec {spec!r}") from None
    raw, flagged = _raw_columns(dataset, columns)
    X = np.column_stack([raw[c] for c in columns])
    y = dataset.target()
    dates = tuple(t.issue_date for t in dataset.tranches)

    if standardization is None:
        rows = np.arange(len(y)) if fit_rows is None else np.asarray(fit_rows)
        stats = {}
        for j, c in enumerate(columns):
            v = X[rows, j]
            std = float(v.std())
            if std <= 1e-12 * max(1.0, float(np.abs(v).max(initial=0.0))):
                std = 0.0
            if c in CONTINUOUS_COLUMNS:
                stats[c] = (float(v.mean()), std)
            else:
                stats[c] = (0.0, 1.0 if std > 0 else 0.0)
    else:
        stats = dict(standardization)

    keep, dropped, notes = [], [], []
    for j, c in enumerate(columns):
        if c not in stats:
            raise ValueError(f"standardization has no entry for column {c!r}")
        if stats[c][1] == 0.0:
            dropped.append(c)
            msg = f"column {c!r} has zero variance and was dropped"
            notes.append(msg)
            warnings.warn(msg, ZeroVarianceWarning, stacklevel=2)
        else:
            keep.append(j)
    cols = tuple(columns[j] for j in keep)
    Z = np.empty((X.shape[0], len(keep)))
    for k, j in enumerate(keep):
        mean, std = stats[columns[j]]
        Z[:, k] = (X[:, j] - mean) / std
    return FeatureMatrix(cols, Z, y, dates, {c: stats[c] for c in cols}, tuple(dropped),
                         tuple(notes), flagged)


# ---------------------------------------------------------------------------
# elastic net
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ElasticNetFit:
    coefficients: np.ndarray
    intercept: float
    lam: float
    alpha_mix: float
    n_iterations: int
    converged: bool
    columns: tuple = ()
    objective_path: tuple = ()

    def predict(self, X):
        return np.asarray(X) @ self.coefficients + self.intercept


def soft_threshold(z, t):
    return math.copysign(max(abs(z) - t, 0.0), z)


def elastic_net_objective(X, y, beta, intercept, lam, alpha_mix):
    r = y - X @ beta - intercept
    n = X.shape[0]
    return (0.5 / n) * float(r @ r) + lam * (
        alpha_mix * float(np.abs(beta).sum()) + 0.5 * (1 - alpha_mix) * float(beta @ beta))


def elastic_net(X, y, lam, alpha_mix, tol=1e-10, max_iter=10000, columns=(),
                beta0=None, fit_intercept=True):
    """Cyclic coordinate descent for the elastic-net objective.

    Minimises ``(1/2n)||y - X b - c||^2 + lam * (a ||b||_1 + (1-a)/2 ||b||^2)``
    with an unpenalised intercept ``c``. Stops when no coefficient moves by
    ``tol`` or more in a sweep; hitting ``max_iter`` returns the current
    iterate with ``converged=False``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in X or y")
    if lam < 0 or not 0 <= alpha_mix <= 1:
        raise ValueError("need lam >= 0 and alpha_mix in [0, 1]")
    beta = np.zeros(X.shape[1]) if beta0 is None else np.array(beta0, dtype=float)
    intercept = float(np.mean(y - X @ beta)) if fit_intercept else 0.0
    start = elastic_net_objective(X, y, beta, intercept, lam, alpha_mix)
    beta, intercept, it, converged, sweeps = _core.enet_descent(
        X, y, beta, intercept, lam * alpha_mix, lam * (1 - alpha_mix), float(tol),
        int(max_iter), bool(fit_intercept))
    path = [start, *map(float, sweeps)]
    return ElasticNetFit(beta, float(intercept), float(lam), float(alpha_mix), int(it),
                         bool(converged), tuple(columns), tuple(path))


def select_features(fit, threshold=0.0, columns=None):
    """Names of columns whose coefficient magnitude exceeds ``threshold``."""
    names = columns if columns is not None else fit.columns
    if len(names) != len(fit.coefficients):
        raise ValueError("column names do not match the coefficient vector")
    return [c for c, b in zip(names, fit.coefficients) if abs(b) > threshold]


DEFAULT_LAMBDAS = tuple(np.logspace(-4, 1, 30))
DEFAULT_MIXES = tuple(np.round(np.arange(1, 10) / 10, 1))


@dataclass(frozen=True)
class ElasticNetSearch:
    lam: float
    alpha_mix: float
    cv_rmse: float
    fit: ElasticNetFit


def chronological_folds(n, k):
    """Contiguous (train, validation) index blocks in row order."""
    if k < 2:
        raise ValueError("need at least 2 folds")
    bounds = np.linspace(0, n, k + 1).astype(int)
    out = []
    for i in range(k):
        val = np.arange(bounds[i], bounds[i + 1])
        if val.size < 2:
            raise ValueError(f"fold {i} has {val.size} rows; need at least 2")
        train = np.concatenate([np.arange(0, bounds[i]), np.arange(bounds[i + 1], n)])
        out.append((train, val))
    return out


def elastic_net_cv(X, y, lambdas=DEFAULT_LAMBDAS, mixes=DEFAULT_MIXES, folds=5,
                   tol=1e-7, max_iter=5000, columns=()):
    """Grid search of (lambda, mix) by k-fold RMSE, then refit on all rows.

    Each fold walks the lambda grid from largest to smallest with warm
    starts. Ties keep the earlier grid point (mix-major, lambda ascending).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    lambdas = np.asarray(sorted(lambdas))
    splits = chronological_folds(len(y), folds)
    sse = np.zeros((len(mixes), len(lambdas)))
    for a_i, a in enumerate(mixes):
        for train, val in splits:
            beta = None
            for l_i in range(len(lambdas) - 1, -1, -1):
                fit = elastic_net(X[train], y[train], lambdas[l_i], a, tol=tol,
                                  max_iter=max_iter, beta0=beta)
                beta = fit.coefficients
                resid = y[val] - fit.predict(X[val])
                sse[a_i, l_i] += float(resid @ resid)
    rmse = np.sqrt(sse / len(y))
    a_i, l_i = np.unravel_index(int(np.argmin(rmse)), rmse.shape)
    lam, mix = float(lambdas[l_i]), float(mixes[a_i])
    fit = elastic_net(X, y, lam, mix, tol=tol, max_iter=max_iter, columns=columns)
    return ElasticNetSearch(lam, mix, float(rmse[a_i, l_i]), fit)
