import datetime as dt
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catcoupon.dataset import (MAX_LAG, SUMMARY_MOMENTS, CATEGORY_SHARES, TRANCHE_FIELDS,
                               ClimateParseError, ClimateSeries, DataError, Dataset,
                               TrancheParseError, TrancheRecord, generate_synthetic,
                               parse_climate_series, parse_planted, parse_tranches,
                               serialize_climate_series, serialize_planted,
                               serialize_tranches, shift_month)

HEADER = ",".join(TRANCHE_FIELDS)


def row(date="2010-05-17", ap=0.02, **over):
    vals = dict(issue_date=date, attachment_point="500.0", attachment_probability=str(ap),
                bb_spread="0.05", cedent_tenure="60", coverage_limit="1000.0",
                expected_loss="0.015", final_spread="0.06", n_locations="2", n_perils="2",
                rol_index="200.0", size="150.0", term="36", peril_type="multiperil",
                trigger_indemnity="1", region_peril_flags="us_wind;us_eq",
                territory="us", sponsor_swiss_re="0", investment_grade="0")
    vals.update({k: str(v) for k, v in over.items()})
    return ",".join(vals[f] for f in TRANCHE_FIELDS)


def test_single_row_parses():
    recs = parse_tranches(HEADER + "\n" + row() + "\n")
    assert len(recs) == 1
    r = recs[0]
    assert r.issue_date == dt.date(2010, 5, 17)
    assert r.region_peril_flags == frozenset({"us_wind", "us_eq"})
    assert r.trigger_indemnity is True and r.n_perils == 2


def test_strict_rejects_summary_range():
    # attachment probability 0.5 exceeds the reference maximum 0.23
    text = HEADER + "\n" + row(ap=0.5) + "\n"
    with pytest.raises(TrancheParseError) as e:
        parse_tranches(text, strict=True)
    assert e.value.row == 1 and e.value.field == "attachment_probability"
    assert len(parse_tranches(text, strict=False)) == 1


def test_rows_sorted_by_date():
    dates = ["2012-03-01", "2005-07-09", "2009-01-31"]
    recs = parse_tranches("\n".join([HEADER] + [row(d) for d in dates]))
    assert [r.issue_date.isoformat() for r in recs] == sorted(dates)


@pytest.mark.parametrize("text, match", [
    ("", "empty"),
    (HEADER + ",extra\n" + row() + ",1\n", "unknown header"),
    (HEADER.replace(",investment_grade", "") + "\n", "missing header"),
])
def test_header_errors(text, match):
    with pytest.raises(TrancheParseError, match=match):
        parse_tranches(text)


def test_malformed_row_reports_row_and_field():
    text = "\n".join([HEADER, row(), row(bb_spread="abc")])
    with pytest.raises(TrancheParseError) as e:
        parse_tranches(text)
    assert e.value.row == 2 and e.value.field == "bb_spread"
    assert "row 2" in str(e.value) and "bb_spread" in str(e.value)


def test_bad_category_and_short_row():
    with pytest.raises(TrancheParseError, match="peril_type"):
        parse_tranches(HEADER + "\n" + row(peril_type="volcano"))
    with pytest.raises(TrancheParseError, match="cells"):
        parse_tranches(HEADER + "\n" + "2010-01-01,1,2")


def test_fraction_out_of_range_rejected_even_lenient():
    with pytest.raises(TrancheParseError, match="expected_loss"):
        parse_tranches(HEADER + "\n" + row(expected_loss="1.5"))


def test_term_bound_is_permissive():
    # 120.5 months is allowed, 121 is not
    assert parse_tranches(HEADER + "\n" + row(term="120.5"), strict=True)
    with pytest.raises(TrancheParseError, match="term"):
        parse_tranches(HEADER + "\n" + row(term="121"), strict=True)


def test_file_object_input():
    assert len(parse_tranches(io.StringIO(HEADER + "\n" + row()))) == 1


# climate files ----------------------------------------------------------------

WIDE = "YEAR,JAN,FEB,MAR,APR,MAY,JUN,JUL,AUG,SEP,OCT,NOV,DEC\n"


def test_wide_layout_two_years():
    text = WIDE + "1997," + ",".join(str(i) for i in range(12)) + "\n" \
        + "1998," + ",".join(str(12 + i) for i in range(12)) + "\n"
    s = parse_climate_series(text, "SOI")
    assert len(s) == 24 and s.first == (1997, 1) and s.last == (1998, 12)
    assert s.value_at(1998, 3) == 14.0


def test_long_layout_single_gap_interpolated():
    text = "YEAR,MONTH,VALUE\n2000,1,1.0\n2000,2,-999.9\n2000,3,3.0\n"
    assert parse_climate_series(text, "AO", interpolate=True).value_at(2000, 2) == 2.0
    with pytest.raises(ClimateParseError, match="interpolation"):
        parse_climate_series(text, "AO")


def test_two_month_gap_thirds():
    text = "YEAR,MONTH,VALUE\n2000,1,0.0\n2000,2,\n2000,3,\n2000,4,3.0\n"
    s = parse_climate_series(text, "AO", interpolate=True)
    assert s.value_at(2000, 2) == pytest.approx(1.0, abs=1e-15)
    assert s.value_at(2000, 3) == pytest.approx(2.0, abs=1e-15)


def test_three_month_gap_rejected():
    text = "YEAR,MONTH,VALUE\n2000,1,0.0\n2000,2,\n2000,3,\n2000,4,\n2000,5,4.0\n"
    with pytest.raises(ClimateParseError, match="gap of 3"):
        parse_climate_series(text, "AO", interpolate=True)


def test_absent_rows_count_as_gap():
    text = "YEAR,MONTH,VALUE\n2000,1,0.0\n2000,5,4.0\n"
    with pytest.raises(ClimateParseError, match="gap"):
        parse_climate_series(text, "AO", interpolate=True)


def test_edge_missing_trimmed():
    text = WIDE + "2001," + ",".join(["-999.9"] * 2 + ["1.5"] * 9 + [""]) + "\n"
    s = parse_climate_series(text, "PNA")
    assert s.first == (2001, 3) and s.last == (2001, 11)


@pytest.mark.parametrize("text, match", [
    ("YEAR,MONTH,VALUE\n2000,1,1.0\n2000,1,2.0\n", "duplicate"),
    ("YEAR,MONTH,VALUE\n2000,1,abc\n", "non-numeric"),
    ("YEAR,MONTH,VALUE\n2000,13,1.0\n", "month"),
    ("A,B\n1,2\n", "header"),
    ("", "empty"),
])
def test_climate_errors(text, match):
    with pytest.raises(ClimateParseError, match=match):
        parse_climate_series(text, "X")


def test_climate_round_trip():
    s = ClimateSeries.from_array("NAO", 1995, 11, np.linspace(-1, 1, 30))
    assert parse_climate_series(serialize_climate_series(s), "NAO") == s


def test_shift_month():
    assert shift_month(2000, 1, -1) == (1999, 12)
    assert shift_month(2000, 12, 1) == (2001, 1)
    assert shift_month(2000, 3, -15) == (1998, 12)


# datasets -----------------------------------------------------------------------

def test_dataset_validation_checks_coverage():
    recs = tuple(parse_tranches(HEADER + "\n" + row("2010-05-17")))
    ok = ClimateSeries.from_array("SOI", 2008, 11, np.zeros(20))
    Dataset(recs, {"SOI": ok}).validate()
    short = ClimateSeries.from_array("SOI", 2009, 1, np.zeros(20))
    with pytest.raises(DataError, match="lags up to"):
        Dataset(recs, {"SOI": short}).validate()


def test_dataset_rejects_unsorted():
    recs = tuple(parse_tranches("\n".join([HEADER, row("2001-01-01"), row("2002-01-01")])))
    with pytest.raises(DataError, match="sorted"):
        Dataset(recs[::-1]).validate()


def test_synthetic_deterministic():
    a, b = generate_synthetic(1, 734), generate_synthetic(1, 734)
    assert serialize_tranches(a.tranches) == serialize_tranches(b.tranches)
    assert a == b
    assert generate_synthetic(2, 734) != a


def test_synthetic_validates_strictly(synthetic):
    synthetic.validate(strict=True)
    assert len(synthetic) == 734
    first = synthetic.tranches[0].issue_date
    assert first >= dt.date(1997, 6, 1)
    assert synthetic.tranches[-1].issue_date <= dt.date(2020, 12, 31)


def test_synthetic_expected_loss_mean(synthetic):
    el = np.array([t.expected_loss for t in synthetic.tranches])
    assert abs(el.mean() - 0.025) <= 0.15 * 0.025


def test_synthetic_indemnity_share(synthetic):
    share = np.mean([t.trigger_indemnity for t in synthetic.tranches])
    assert abs(share - 0.4305) <= 0.05


def test_synthetic_marginals_within_15pct(synthetic):
    for name, (mean, std) in SUMMARY_MOMENTS.items():
        v = np.array([getattr(t, name) for t in synthetic.tranches], dtype=float)
        assert abs(v.mean() - mean) <= 0.15 * abs(mean), name
        assert abs(v.std(ddof=1) - std) <= 0.15 * std, name


def test_synthetic_rejects_small_n():
    with pytest.raises(ValueError, match="50"):
        generate_synthetic(0, 49)


def test_synthetic_climate_covers_max_lag(synthetic):
    first = synthetic.tranches[0].issue_date
    need = shift_month(first.year, first.month, -MAX_LAG)
    for s in synthetic.climate.values():
        assert s.covers(*need)


def test_planted_round_trip(synthetic):
    assert parse_planted(serialize_planted(synthetic.planted)) == synthetic.planted
    assert {"soi_lag15", "olr_lag12"} <= set(synthetic.planted)


def _shares(ds):
    ts = ds.tranches
    out = {"trigger_indemnity": ("", np.mean([t.trigger_indemnity for t in ts]))}
    for field in ("peril_type", "territory"):
        for cat in CATEGORY_SHARES[field]:
            out[f"{field}:{cat}"] = (field, np.mean([getattr(t, field) == cat for t in ts]))
    for flag in CATEGORY_SHARES["region_peril_flags"]:
        out[f"flag:{flag}"] = ("region_peril_flags",
                               np.mean([flag in t.region_peril_flags for t in ts]))
    return out


def _target(key):
    if key == "trigger_indemnity":
        return CATEGORY_SHARES[key]
    field, cat = key.split(":")
    field = "region_peril_flags" if field == "flag" else field
    return CATEGORY_SHARES[field][cat]


@pytest.mark.slow
def test_synthetic_binary_shares_large_n():
    ds = generate_synthetic(7, 5000)
    for key, (_, got) in _shares(ds).items():
        assert abs(got - _target(key)) <= 0.02, (key, got)


@pytest.mark.slow
def test_planted_coefficients_recovered_large_n():
    from catcoupon.features import lag_join
    ds = generate_synthetic(3, 5000)
    ts = ds.tranches
    cols = {
        "expected_loss": [t.expected_loss for t in ts],
        "bb_spread": [t.bb_spread for t in ts],
        "peril_storm": [t.peril_type == "storm" for t in ts],
        "peril_earthquake": [t.peril_type == "earthquake" for t in ts],
        "territory_multi": [t.territory == "multi" for t in ts],
        "territory_us": [t.territory == "us" for t in ts],
        "soi_lag15": lag_join(ts, ds.climate["SOI"], 15),
        "olr_lag12": lag_join(ts, ds.climate["OLR"], 12),
    }
    names = list(cols)
    A = np.column_stack([np.ones(len(ts))] + [np.asarray(cols[c], float) for c in names])
    y = ds.target()
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    s2 = resid @ resid / (len(y) - A.shape[1])
    se = np.sqrt(np.diag(s2 * np.linalg.inv(A.T @ A)))
    # clipping of the target biases slightly; allow the stated 3 standard errors
    for j, c in enumerate(["intercept"] + names):
        assert abs(coef[j] - ds.planted[c]) <= 3 * se[j], (c, coef[j], ds.planted[c], se[j])


# round trip property -------------------------------------------------------------

_record = st.builds(
    TrancheRecord,
    issue_date=st.dates(dt.date(1997, 6, 1), dt.date(2020, 12, 31)),
    attachment_point=st.floats(0, 1e4, allow_nan=False),
    attachment_probability=st.floats(0, 1), bb_spread=st.floats(0, 1),
    cedent_tenure=st.floats(0, 500), coverage_limit=st.floats(0.1, 1e4),
    expected_loss=st.floats(0, 1), final_spread=st.floats(1e-4, 0.999),
    n_locations=st.integers(1, 20), n_perils=st.integers(1, 10),
    rol_index=st.floats(1, 500), size=st.floats(1, 2000), term=st.floats(1, 120),
    peril_type=st.sampled_from(["multiperil", "storm", "earthquake", "other"]),
    trigger_indemnity=st.booleans(),
    region_peril_flags=st.frozensets(st.sampled_from(["us_wind", "us_eq", "europe_wind",
                                                      "japan_eq"])),
    territory=st.sampled_from(["multi", "us", "europe", "japan", "other"]),
    sponsor_swiss_re=st.booleans(), investment_grade=st.booleans(),
)


@settings(max_examples=60)
@given(st.lists(_record, min_size=1, max_size=8))
def test_serialize_parse_round_trip(records):
    records = sorted(records, key=lambda r: r.issue_date)
    text = serialize_tranches(records)
    parsed = parse_tranches(text)
    assert [r.issue_date for r in parsed] == [r.issue_date for r in records]
    assert serialize_tranches(parsed) == text
    assert parse_tranches(serialize_tranches(parsed)) == parsed
