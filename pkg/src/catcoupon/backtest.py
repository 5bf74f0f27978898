"""Value-at-Risk backtests: exceedances, coverage likelihood ratios and
traffic-light zoning."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

ZONES = ("green", "yellow", "red")
GREEN_LIMIT = 0.95
YELLOW_LIMIT = 0.9999
REPORT_FIELDS = ("N", "x", "failure_rate", "coverage", "lruc", "p_uc", "lrind", "p_ind",
                 "lrcc", "p_cc", "binomial_cdf", "basel_zone")
_ANSI = {"green": "\x1b[32m", "yellow": "\x1b[33m", "red": "\x1b[31m"}


@dataclass(frozen=True)
class ExceedanceSeries:
    hits: np.ndarray  # bool, True where the actual fell below the VaR forecast

    @property
    def N(self):
        return int(self.hits.size)

    @property
    def x(self):
        return int(np.count_nonzero(self.hits))


def exceedances(y_true, var_forecasts):
    y = np.asarray(y_true, dtype=float)
    v = np.asarray(var_forecasts, dtype=float)
    if y.shape != v.shape:
        raise ValueError(f"length mismatch: {y.size} actuals vs {v.size} VaR forecasts")
    return ExceedanceSeries(y < v)


def _xlogy(x, y):
    # 0 * ln 0 = 0
    return 0.0 if x == 0 else x * math.log(y)


def kupiec_lruc(N, x, p=0.05):
    """Unconditional coverage likelihood ratio for ``x`` failures in ``N``."""
    if N < 1 or not 0 <= x <= N:
        raise ValueError(f"need 0 <= x <= N and N >= 1, got N={N}, x={x}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    pi = x / N
    null = _xlogy(N - x, 1.0 - p) + _xlogy(x, p)
    alt = _xlogy(N - x, 1.0 - pi) + _xlogy(x, pi)
    return _nonneg(-2.0 * (null - alt))


def _nonneg(stat):
    # rounding can leave tiny negatives (and -0.0) where the statistic is 0
    return stat if stat > 0.0 else 0.0


def transition_counts(hits):
    h = np.asarray(hits, dtype=bool)
    a, b = h[:-1], h[1:]
    return (int(np.count_nonzero(~a & ~b)), int(np.count_nonzero(~a & b)),
            int(np.count_nonzero(a & ~b)), int(np.count_nonzero(a & b)))


def christoffersen_lrind(series):
    """Independence likelihood ratio of a first-order Markov chain of hits
    against an i.i.d. Bernoulli sequence."""
    hits = series.hits if isinstance(series, ExceedanceSeries) else np.asarray(series, bool)
    if hits.size < 2:
        raise ValueError("need at least 2 observations")
    n00, n01, n10, n11 = transition_counts(hits)
    pi = (n01 + n11) / (hits.size - 1)
    null = _xlogy(n00 + n10, 1.0 - pi) + _xlogy(n01 + n11, pi)
    alt = 0.0
    # a state never left has no transition likelihood
    if n00 + n01:
        pi01 = n01 / (n00 + n01)
        alt += _xlogy(n00, 1.0 - pi01) + _xlogy(n01, pi01)
    if n10 + n11:
        pi11 = n11 / (n10 + n11)
        alt += _xlogy(n10, 1.0 - pi11) + _xlogy(n11, pi11)
    return _nonneg(-2.0 * (null - alt))


def lrcc(lruc, lrind):
    return lruc + lrind


def chi2_sf(stat, dof):
    """Chi-square survival function for 1 or 2 degrees of freedom."""
    if stat < 0:
        raise ValueError(f"statistic must be >= 0, got {stat}")
    if dof == 1:
        return math.erfc(math.sqrt(stat / 2.0))
    if dof == 2:
        return math.exp(-stat / 2.0)
    raise ValueError(f"dof must be 1 or 2, got {dof}")


def binomial_cdf(x, N, p):
    """P(X <= x) for X ~ Binomial(N, p), summed in log space."""
    if x < 0:
        return 0.0
    if x >= N:
        return 1.0
    lp, lq = math.log(p), math.log1p(-p)
    terms = [math.lgamma(N + 1) - math.lgamma(k + 1) - math.lgamma(N - k + 1)
             + k * lp + (N - k) * lq for k in range(x + 1)]
    m = max(terms)
    return min(1.0, math.exp(m) * math.fsum(math.exp(t - m) for t in terms))


def basel_zone(N, x, p=0.05):
    if N < 1 or not 0 <= x <= N:
        raise ValueError(f"need 0 <= x <= N and N >= 1, got N={N}, x={x}")
    cdf = binomial_cdf(x, N, p)
    if cdf <= GREEN_LIMIT:
        return "green"
    if cdf <= YELLOW_LIMIT:
        return "yellow"
    return "red"


@dataclass(frozen=True)
class BacktestReport:
    N: int
    x: int
    failure_rate: float
    coverage: float
    lruc: float
    p_uc: float
    lrind: float
    p_ind: float
    lrcc: float
    p_cc: float
    binomial_cdf: float
    basel_zone: str

    def as_dict(self):
        return {k: getattr(self, k) for k in REPORT_FIELDS}

    def to_text(self):
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.as_dict().items())

    def csv_row(self, label=None):
        vals = [_fmt(v) for v in self.as_dict().values()]
        return ",".join(([label] if label is not None else []) + vals)

    def summary(self, color=False):
        zone = self.basel_zone
        if color:
            zone = f"{_ANSI[zone]}{zone}\x1b[0m"
        return (f"N={self.N} failures={self.x} ({100 * self.failure_rate:.2f}%)\n"
                f"LRUC={self.lruc:.4f} (p={self.p_uc:.4f})\n"
                f"LRIND={self.lrind:.4f} (p={self.p_ind:.4f})\n"
                f"LRCC={self.lrcc:.4f} (p={self.p_cc:.4f})\n"
                f"Basel zone: {zone}\n")


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def backtest(series, p=0.05):
    N, x = series.N, series.x
    uc = kupiec_lruc(N, x, p)
    ind = christoffersen_lrind(series)
    cc = lrcc(uc, ind)
    if abs(cc - (uc + ind)) > 1e-9:
        raise AssertionError("LRCC is not the sum of its components")
    return BacktestReport(N, x, x / N, p, uc, chi2_sf(uc, 1), ind, chi2_sf(ind, 1), cc,
                          chi2_sf(cc, 2), binomial_cdf(x, N, p), basel_zone(N, x, p))


def report_csv(reports):
    """CSV text for ``{label: BacktestReport}``."""
    lines = [",".join(("model",) + REPORT_FIELDS)]
    lines += [r.csv_row(label) for label, r in reports.items()]
    return "\n".join(lines) + "\n"


def parse_report_text(text):
    out = {}
    for line in text.splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            out[k] = v
    return out


def parse_exceedances(text):
    """One 0/1 flag per line; an optional non-numeric header line is skipped."""
    lines = [ln.strip() for ln in io.StringIO(text) if ln.strip()]
    if lines and lines[0] not in ("0", "1"):
        lines = lines[1:]
    if not lines:
        raise ValueError("exceedance file has no rows")
    bad = [i for i, ln in enumerate(lines, start=1) if ln not in ("0", "1")]
    if bad:
        raise ValueError(f"exceedance row {bad[0]} is not 0 or 1: {lines[bad[0] - 1]!r}")
    return ExceedanceSeries(np.array([ln == "1" for ln in lines]))
