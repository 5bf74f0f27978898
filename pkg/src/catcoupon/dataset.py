"""Tranche and climate-series data model, file parsing and synthetic data.

Tranche files are comma-separated with one header row naming every
:class:`TrancheRecord` field. Climate files come in a *wide* layout
(``YEAR,JAN,...,DEC``) or a *long* one (``YEAR,MONTH,VALUE``).
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, field, fields
from typing import Mapping

import numpy as np

PERIL_TYPES = ("multiperil", "storm", "earthquake", "other")
TERRITORIES = ("multi", "us", "europe", "japan", "other")
REGION_PERIL_FLAGS = ("us_wind", "us_eq", "europe_wind", "japan_eq")
CLIMATE_INDICES = ("ONI", "AO", "NAO", "OLR", "PNA", "PDO", "SOI")
SST_REGIONS = ("SST_WORLD", "SST_ATLANTIC_HURRICANE", "SST_NORTH_ATLANTIC",
               "SST_SUBPOLAR_NORTH_ATLANTIC", "SST_GULF_OF_MEXICO", "SST_GULF_OF_MAINE",
               "SST_NINO34")
MISSING_SENTINEL = -999.9
MAX_LAG = 18

# (min, max) per continuous field over the primary-market sample.
# Term uses a permissive 120.5 upper bound.
SUMMARY_BOUNDS = {
    "attachment_point": (17.5, 20670.0),
    "attachment_probability": (0.00021, 0.23),
    "bb_spread": (0.015, 0.11),
    "cedent_tenure": (0.0, 281.0),
    "coverage_limit": (65.0, 25000.0),
    "expected_loss": (0.0, 0.15),
    "final_spread": (0.0065, 0.49),
    "n_locations": (1, 3),
    "n_perils": (1, 8),
    "rol_index": (151.8, 293.8),
    "size": (1.8, 1500.0),
    "term": (1, 120.5),
}

# (mean, std) per continuous field over the same sample.
SUMMARY_MOMENTS = {
    "attachment_point": (2505.3, 3565.48),
    "attachment_probability": (0.039, 0.039),
    "bb_spread": (0.035, 0.014),
    "cedent_tenure": (60.99, 70.93),
    "coverage_limit": (3267.14, 4331.26),
    "expected_loss": (0.025, 0.025),
    "final_spread": (0.077, 0.051),
    "n_locations": (1.34, 0.65),
    "n_perils": (2.37, 1.92),
    "rol_index": (220.49, 40.23),
    "size": (134.28, 123.59),
    "term": (36.38, 12.5),
}

# Category shares over the 734-tranche sample.
CATEGORY_SHARES = {
    "peril_type": {"multiperil": 0.5559, "storm": 0.2411, "earthquake": 0.173, "other": 0.03},
    "trigger_indemnity": 0.4305,
    "region_peril_flags": {"us_wind": 0.6253, "us_eq": 0.5545, "europe_wind": 0.188,
                           "japan_eq": 0.1213},
    "territory": {"multi": 0.2561, "us": 0.5722, "europe": 0.0736, "japan": 0.0613,
                  "other": 0.0422},
}

# Not tabulated; plausible market shares for the issuer-quality dummies.
SPONSOR_SWISS_RE_SHARE = 0.12
INVESTMENT_GRADE_SHARE = 0.05

_FRACTION_FIELDS = ("attachment_probability", "bb_spread", "expected_loss")
_POSITIVE_FIELDS = ("coverage_limit", "rol_index", "size")
_BOOL_FIELDS = ("trigger_indemnity", "sponsor_swiss_re", "investment_grade")
_MONTHS = ("JAN", "FEB", "MAR", "APR", "MAY", "JUN", "JUL", "AUG", "SEP", "OCT", "NOV", "DEC")


class DataError(ValueError):
    """Raised for malformed or invalid input data."""


class TrancheParseError(DataError):
    def __init__(self, message, row=None, field=None):
        self.row = row
        self.field = field
        where = []
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ClimateParseError(DataError):
    pass


@dataclass(frozen=True)
class TrancheRecord:
    issue_date: dt.date
    attachment_point: float
    attachment_probability: float
    bb_spread: float
    cedent_tenure: float
    coverage_limit: float
    expected_loss: float
    final_spread: float
    n_locations: int
    n_perils: int
    rol_index: float
    size: float
    term: float
    peril_type: str
    trigger_indemnity: bool
    region_peril_flags: frozenset
    territory: str
    sponsor_swiss_re: bool
    investment_grade: bool

    @property
    def year_month(self):
        return (self.issue_date.year, self.issue_date.month)

    def validate(self, strict=False):
        """Check record invariants; ``strict`` adds the summary min/max ranges."""
        for name in _FRACTION_FIELDS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise TrancheParseError(f"{v} outside [0, 1]", field=name)
        if not 0.0 < self.final_spread < 1.0:
            raise TrancheParseError(f"{self.final_spread} outside (0, 1)", field="final_spread")
        for name in _POSITIVE_FIELDS:
            v = getattr(self, name)
            if not v > 0:
                raise TrancheParseError(f"{v} must be positive", field=name)
        if self.attachment_point < 0:
            raise TrancheParseError("must be non-negative", field="attachment_point")
        if self.cedent_tenure < 0:
            raise TrancheParseError("must be non-negative", field="cedent_tenure")
        for name in ("n_locations", "n_perils", "term"):
            if getattr(self, name) < 1:
                raise TrancheParseError("must be at least 1", field=name)
        if self.peril_type not in PERIL_TYPES:
            raise TrancheParseError(f"unknown category {self.peril_type!r}", field="peril_type")
        if self.territory not in TERRITORIES:
            raise TrancheParseError(f"unknown category {self.territory!r}", field="territory")
        unknown = set(self.region_peril_flags) - set(REGION_PERIL_FLAGS)
        if unknown:
            raise TrancheParseError(f"unknown flags {sorted(unknown)}", field="region_peril_flags")
        if strict:
            for name, (lo, hi) in SUMMARY_BOUNDS.items():
                v = getattr(self, name)
                if not lo <= v <= hi:
                    raise TrancheParseError(f"{v} outside [{lo}, {hi}]", field=name)


TRANCHE_FIELDS = tuple(f.name for f in fields(TrancheRecord))


@dataclass(frozen=True)
class ClimateSeries:
    """Contiguous monthly series starting at ``(start_year, start_month)``."""

    name: str
    start_year: int
    start_month: int
    values: tuple

    def __post_init__(self):
        if not 1 <= self.start_month <= 12:
            raise ClimateParseError(f"{self.name}: month {self.start_month} out of range")
        if not all(math.isfinite(v) for v in self.values):
            raise ClimateParseError(f"{self.name}: non-finite observation")

    @classmethod
    def from_array(cls, name, start_year, start_month, values):
        return cls(name, int(start_year), int(start_month),
                   tuple(float(v) for v in np.asarray(values, dtype=float)))

    def __len__(self):
        return len(self.values)

    def _offset(self, year, month):
        return (year - self.start_year) * 12 + (month - self.start_month)

    @property
    def first(self):
        return (self.start_year, self.start_month)

    @property
    def last(self):
        return shift_month(self.start_year, self.start_month, len(self.values) - 1)

    def covers(self, year, month):
        return 0 <= self._offset(year, month) < len(self.values)

    def value_at(self, year, month):
        k = self._offset(year, month)
        if not 0 <= k < len(self.values):
            raise KeyError((year, month))
        return self.values[k]

    def items(self):
        y, m = self.start_year, self.start_month
        for v in self.values:
            yield (y, m), v
            y, m = shift_month(y, m, 1)

    def as_dict(self):
        return dict(self.items())


@dataclass(frozen=True)
class Dataset:
    tranches: tuple
    climate: Mapping[str, ClimateSeries] = field(default_factory=dict)
    # planted generating coefficients; empty for parsed data
    planted: Mapping[str, float] = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.tranches)

    def validate(self, strict=False):
        """Check ordering, record invariants and lag coverage of every series."""
        if not self.tranches:
            raise DataError("dataset has no tranches")
        dates = [t.issue_date for t in self.tranches]
        if any(a > b for a, b in zip(dates, dates[1:])):
            raise DataError("tranches are not sorted by issue_date")
        for i, t in enumerate(self.tranches):
            try:
                t.validate(strict=strict)
            except TrancheParseError as exc:
                raise TrancheParseError(str(exc).split(": ", 1)[-1], row=i + 1,
                                        field=exc.field) from None
        first = shift_month(dates[0].year, dates[0].month, -MAX_LAG)
        last = (dates[-1].year, dates[-1].month)
        for name, series in self.climate.items():
            if not (series.covers(*first) and series.covers(*last)):
                raise DataError(
                    f"climate series {name} spans {series.first}-{series.last}, "
                    f"needs {first}-{last} for lags up to {MAX_LAG}")
        return self

    def target(self):
        return np.array([t.final_spread for t in self.tranches])


def shift_month(year, month, delta):
    k = year * 12 + (month - 1) + delta
    return (k // 12, k % 12 + 1)


# ---------------------------------------------------------------------------
# tranche files
# ---------------------------------------------------------------------------

def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_field(name, text):
    text = text.strip()
    if name == "issue_date":
        return dt.date.fromisoformat(text)
    if name in _BOOL_FIELDS:
        return _parse_bool(text)
    if name == "region_peril_flags":
        return frozenset(s.strip() for s in text.split(";") if s.strip())
    if name in ("peril_type", "territory"):
        return text.lower()
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    if name in ("n_locations", "n_perils"):
        if value != int(value):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    return value


def parse_tranches(text, strict=False):
    """Parse a tranche file into records sorted by issue date.

    Parameters
    ----------
    text : str or file-like
        Comma-separated content with a header naming every record field.
    strict : bool
        Also reject values outside the summary min/max bounds.

    Raises
    ------
    TrancheParseError
        On empty input, unknown or missing header names, or a malformed row
        (the message carries the 1-based data-row number and the field).
    """
    if not isinstance(text, str):
        text = text.read()
    if not text.strip():
        raise TrancheParseError("empty input")
    reader = csv.reader(io.StringIO(text))
    header = [h.strip() for h in next(reader)]
    unknown = [h for h in header if h not in TRANCHE_FIELDS]
    if unknown:
        raise TrancheParseError(f"unknown header {unknown}")
    missing = [f for f in TRANCHE_FIELDS if f not in header]
    if missing:
        raise TrancheParseError(f"missing header {missing}")
    records = []
    for rownum, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise TrancheParseError(f"expected {len(header)} cells, got {len(row)}", row=rownum)
        values = {}
        for name, cell in zip(header, row):
            try:
                values[name] = _parse_field(name, cell)
            except ValueError as exc:
                raise TrancheParseError(str(exc), row=rownum, field=name) from None
        record = TrancheRecord(**values)
        try:
            record.validate(strict=strict)
        except TrancheParseError as exc:
            raise TrancheParseError(str(exc).split(": ", 1)[-1], row=rownum,
                                    field=exc.field) from None
        records.append(record)
    if not records:
        raise TrancheParseError("no data rows")
    records.sort(key=lambda r: r.issue_date)
    return records


def _format_field(name, value):
    if name == "issue_date":
        return value.isoformat()
    if name in _BOOL_FIELDS:
        return "1" if value else "0"
    if name == "region_peril_flags":
        return ";".join(f for f in REGION_PERIL_FLAGS if f in value)
    if isinstance(value, str):
        return value
    if name in ("n_locations", "n_perils"):
        return str(int(value))
    return repr(float(value))


def serialize_tranches(records):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRANCHE_FIELDS)
    for r in records:
        writer.writerow([_format_field(n, getattr(r, n)) for n in TRANCHE_FIELDS])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# climate files
# ---------------------------------------------------------------------------

def _climate_cell(text, name, where):
    text = text.strip()
    if text == "":
        return None
    try:
        v = float(text)
    except ValueError:
        raise ClimateParseError(f"{name}: non-numeric cell {text!r} at {where}") from None
    if math.isclose(v, MISSING_SENTINEL) or not math.isfinite(v):
        return None
    return v


def parse_climate_series(text, name, interpolate=False):
    """Parse a monthly climate file in wide or long layout.

    Missing cells (empty or ``-999.9``) before the first and after the last
    observation are trimmed. Interior gaps raise unless ``interpolate`` is
    set, in which case gaps of at most two months are filled linearly.
    """
    if not isinstance(text, str):
        text = text.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ClimateParseError(f"{name}: empty input")
    header = [h.strip().upper() for h in rows[0]]
    obs = {}

    def put(year, month, value, where):
        if (year, month) in obs:
            raise ClimateParseError(f"{name}: duplicate observation {year}-{month:02d}")
        obs[(year, month)] = value

    if header == ["YEAR", *_MONTHS]:
        for i, row in enumerate(rows[1:], start=2):
            if len(row) != 13:
                raise ClimateParseError(f"{name}: line {i} has {len(row)} cells, expected 13")
            year = _climate_int(row[0], name, i)
            for m in range(12):
                put(year, m + 1, _climate_cell(row[m + 1], name, f"line {i}"), i)
    elif header == ["YEAR", "MONTH", "VALUE"]:
        for i, row in enumerate(rows[1:], start=2):
            if len(row) != 3:
                raise ClimateParseError(f"{name}: line {i} has {len(row)} cells, expected 3")
            year = _climate_int(row[0], name, i)
            month = _climate_int(row[1], name, i)
            if not 1 <= month <= 12:
                raise ClimateParseError(f"{name}: month {month} out of range at line {i}")
            put(year, month, _climate_cell(row[2], name, f"line {i}"), i)
    else:
        raise ClimateParseError(f"{name}: unrecognised header {rows[0]}")

    present = sorted(k for k, v in obs.items() if v is not None)
    if not present:
        raise ClimateParseError(f"{name}: no observations")
    y0, m0 = present[0]
    y1, m1 = present[-1]
    n = (y1 - y0) * 12 + (m1 - m0) + 1
    values = np.full(n, np.nan)
    for (y, m), v in obs.items():
        k = (y - y0) * 12 + (m - m0)
        if v is not None and 0 <= k < n:
            values[k] = v

    missing = np.flatnonzero(np.isnan(values))
    if missing.size:
        # runs of consecutive missing months; all interior after trimming
        runs = np.split(missing, np.flatnonzero(np.diff(missing) > 1) + 1)
        for run in runs:
            ys, ms = shift_month(y0, m0, int(run[0]))
            if len(run) > 2:
                raise ClimateParseError(
                    f"{name}: gap of {len(run)} months starting {ys}-{ms:02d}")
            if not interpolate:
                raise ClimateParseError(
                    f"{name}: missing value at {ys}-{ms:02d} (interpolation disabled)")
            a, b = run[0] - 1, run[-1] + 1
            w = (run - a) / (b - a)
            values[run] = values[a] + w * (values[b] - values[a])
    return ClimateSeries.from_array(name, y0, m0, values)


def _climate_int(text, name, line):
    try:
        return int(text.strip())
    except ValueError:
        raise ClimateParseError(f"{name}: non-numeric cell {text!r} at line {line}") from None


def serialize_climate_series(series):
    """Long-layout text for a series."""
    lines = ["YEAR,MONTH,VALUE"]
    for (y, m), v in series.items():
        lines.append(f"{y},{m},{v!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

# generating model of final_spread; climate terms act on the raw series value
PLANTED_COEFFICIENTS = {
    "intercept": 0.02,
    "expected_loss": 1.9,
    "bb_spread": 0.45,
    "peril_storm": 0.006,
    "peril_earthquake": -0.004,
    "territory_multi": 0.005,
    "territory_us": -0.003,
    "soi_lag15": 0.009,
    "olr_lag12": 0.008,
}
PLANTED_NOISE_SD = 0.008
CLIMATE_AR = 0.8


def _lognormal(rng, n, mean, std, lo, hi):
    s2 = math.log(1.0 + (std / mean) ** 2)
    mu = math.log(mean) - 0.5 * s2
    return np.clip(rng.lognormal(mu, math.sqrt(s2), n), lo, hi)


def _ar1(rng, n, phi=CLIMATE_AR):
    e = rng.normal(size=n) * math.sqrt(1.0 - phi * phi)
    x = np.empty(n)
    x[0] = rng.normal()
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return x


def generate_synthetic(seed, n):
    """Synthetic tranche dataset mirroring the reference marginals.

    Continuous fields follow clipped log-normal or normal laws matched to
    ``SUMMARY_MOMENTS``; categorical fields follow ``CATEGORY_SHARES``; climate series are unit-variance AR(1) processes. The target is
    linear in expected loss, BB spread, peril and territory dummies, SOI at
    lag 15 and OLR at lag 12 plus Gaussian noise. The coefficients are
    attached as ``Dataset.planted``.
    """
    if n < 50:
        raise ValueError(f"n must be at least 50, got {n}")
    rng = np.random.default_rng(seed)

    start = dt.date(1997, 6, 1).toordinal()
    end = dt.date(2020, 12, 31).toordinal()
    ordinals = np.sort(rng.integers(start, end + 1, size=n))
    dates = [dt.date.fromordinal(int(o)) for o in ordinals]

    # monthly grid covering the maximum lag before the first issue
    y0, m0 = shift_month(1997, 6, -MAX_LAG - 6)
    n_months = (2020 - y0) * 12 + (12 - m0) + 1
    month_idx = np.array([(d.year - y0) * 12 + d.month - m0 for d in dates])

    climate = {}
    for name in CLIMATE_INDICES + SST_REGIONS[:3]:
        climate[name] = ClimateSeries.from_array(name, y0, m0, _ar1(rng, n_months))

    t = np.arange(n_months)
    rol_series = np.clip(220.0 + 50.0 * np.sin(2 * np.pi * t / 96.0 + 0.2)
                         + 14.0 * _ar1(rng, n_months, 0.9), 151.8, 293.8)
    bb_series = np.clip(0.035 + 0.014 * np.sin(2 * np.pi * t / 120.0 + 2.0)
                        + 0.006 * _ar1(rng, n_months, 0.9), 0.015, 0.11)

    attachment_point = _lognormal(rng, n, 2560.0, 4300.0, 17.5, 20670.0)
    attachment_probability = _lognormal(rng, n, 0.039, 0.043, 0.00021, 0.23)
    cedent_tenure = np.round(_lognormal(rng, n, 72.0, 100.0, 0.0, 281.0) - 8.0).clip(0, 281)
    coverage_limit = _lognormal(rng, n, 3300.0, 5300.0, 65.0, 25000.0)
    expected_loss = _lognormal(rng, n, 0.025, 0.027, 0.0, 0.15)
    n_locations = rng.choice([1, 2, 3], size=n, p=[0.759, 0.142, 0.099])
    n_perils = np.minimum(rng.geometric(0.42, size=n), 8)
    size = _lognormal(rng, n, 134.28, 140.0, 1.8, 1500.0)
    term = np.clip(np.round(rng.normal(36.38, 12.5, size=n)), 1, 120)

    def categorical(shares):
        keys = list(shares)
        p = np.array([shares[k] for k in keys])
        return [keys[i] for i in rng.choice(len(keys), size=n, p=p / p.sum())]

    peril = categorical(CATEGORY_SHARES["peril_type"])
    territory = categorical(CATEGORY_SHARES["territory"])
    indemnity = rng.random(n) < CATEGORY_SHARES["trigger_indemnity"]
    flag_draws = {f: rng.random(n) < s for f, s in CATEGORY_SHARES["region_peril_flags"].items()}
    swiss_re = rng.random(n) < SPONSOR_SWISS_RE_SHARE
    inv_grade = rng.random(n) < INVESTMENT_GRADE_SHARE

    bb = bb_series[month_idx]
    rol = rol_series[month_idx]
    soi = np.asarray(climate["SOI"].values)[month_idx - 15]
    olr = np.asarray(climate["OLR"].values)[month_idx - 12]
    c = PLANTED_COEFFICIENTS
    peril_arr = np.array(peril)
    terr_arr = np.array(territory)
    spread = (c["intercept"] + c["expected_loss"] * expected_loss + c["bb_spread"] * bb
              + c["peril_storm"] * (peril_arr == "storm")
              + c["peril_earthquake"] * (peril_arr == "earthquake")
              + c["territory_multi"] * (terr_arr == "multi")
              + c["territory_us"] * (terr_arr == "us")
              + c["soi_lag15"] * soi + c["olr_lag12"] * olr
              + rng.normal(0.0, PLANTED_NOISE_SD, size=n))
    spread = np.clip(spread, 0.0065, 0.49)

    records = []
    for i in range(n):
        records.append(TrancheRecord(
            issue_date=dates[i],
            attachment_point=float(attachment_point[i]),
            attachment_probability=float(attachment_probability[i]),
            bb_spread=float(bb[i]),
            cedent_tenure=float(cedent_tenure[i]),
            coverage_limit=float(coverage_limit[i]),
            expected_loss=float(expected_loss[i]),
            final_spread=float(spread[i]),
            n_locations=int(n_locations[i]),
            n_perils=int(n_perils[i]),
            rol_index=float(rol[i]),
            size=float(size[i]),
            term=float(term[i]),
            peril_type=peril[i],
            trigger_indemnity=bool(indemnity[i]),
            region_peril_flags=frozenset(f for f in REGION_PERIL_FLAGS if flag_draws[f][i]),
            territory=territory[i],
            sponsor_swiss_re=bool(swiss_re[i]),
            investment_grade=bool(inv_grade[i]),
        ))
    planted = dict(c, noise_sd=PLANTED_NOISE_SD)
    return Dataset(tuple(records), climate, planted)


def serialize_planted(planted):
    return "".join(f"{k}={v!r}\n" for k, v in planted.items())


def parse_planted(text):
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        k, _, v = line.partition("=")
        out[k.strip()] = float(v)
    return out
