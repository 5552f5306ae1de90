import math

import numpy as np
import pandas as pd
import pytest

from fiscaliv.dataio import parse_quarter
from fiscaliv.errors import (
    AlignmentError,
    DataError,
    DegenerateError,
)
from fiscaliv.instrument import (
    ExportWeights,
    ForecastVintage,
    aggregate_instrument,
    build_forecast_errors,
    export_share_weights,
    forecast_error,
    interpolate_semiannual,
    level_to_logdiff_forecast,
    pretest,
    read_exports,
    read_instrument,
    read_vintages,
    semiannual_quarters,
    write_instrument,
    InstrumentSeries,
)

LN_102_100 = 0.01980262729617973          # log(102/100)
LN_101_100 = 0.009950330853168092         # log(101/100)
ERR_ORACLE = -0.009852296443011638        # ln(1.01) - ln(1.02)


def _vintage(**kw):
    base = dict(
        issuer="OECD",
        issue_period="1999Q4",
        target_country="DEU",
        target_period="2000Q1",
        variable="gdp",
        horizon=1,
        kind="logdiff",
        value=LN_102_100,
    )
    base.update(kw)
    return ForecastVintage(**base)


def test_level_forecast_converts_to_logdiff():
    v = _vintage(kind="level", value=102.0)
    out = level_to_logdiff_forecast(v, prior_level=100.0)
    assert out.kind == "logdiff"
    assert out.value == pytest.approx(LN_102_100, abs=1e-12)
    with pytest.raises(DataError):
        level_to_logdiff_forecast(out, prior_level=100.0)
    with pytest.raises(DataError):
        level_to_logdiff_forecast(_vintage(kind="level", value=-1.0), 100.0)


def test_forecast_error_oracle():
    period, err = forecast_error("2000Q1", LN_101_100, _vintage())
    assert period == "2000Q1"
    assert err == pytest.approx(ERR_ORACLE, abs=1e-12)


def test_forecast_error_guards():
    with pytest.raises(AlignmentError):
        forecast_error("2000Q2", 0.01, _vintage())
    with pytest.raises(DataError):
        forecast_error("2000Q1", 0.01, _vintage(kind="level", value=102.0))
    with pytest.raises(DataError):
        forecast_error(
            "2000Q2", 0.01,
            _vintage(horizon=2, target_period="2000Q2"),
        )


def test_vintage_target_must_follow_issue():
    with pytest.raises(DataError, match="not after issue"):
        _vintage(issue_period="2000Q1", target_period="2000Q1")
    # horizon-0 rows are base levels, same period is fine there
    _vintage(issue_period="2000Q1", target_period="2000Q1",
             horizon=0, kind="level", value=100.0)


def test_semiannual_period_parsing():
    assert semiannual_quarters("1999S1") == (1999 * 4, 1999 * 4 + 1)
    assert semiannual_quarters("1999S2") == (1999 * 4 + 2, 1999 * 4 + 3)
    with pytest.raises(DataError):
        semiannual_quarters("1999S3")


def test_interpolate_semiannual_splits_evenly():
    out = interpolate_semiannual("2001S2", 0.06)
    assert out == [("2001Q3", 0.03), ("2001Q4", 0.03)]


def test_export_share_weights_moving_average():
    # one partner pair, constant shares 0.25/0.75, any window
    idx = [parse_quarter(f"1990Q{i}") for i in (1, 2, 3, 4)]
    table = pd.DataFrame({"USA": [10.0] * 4, "DEU": [30.0] * 4}, index=idx)
    w = export_share_weights(table, domestic="CAN")
    np.testing.assert_allclose(w.table["USA"].to_numpy(), 0.25, atol=1e-15)
    np.testing.assert_allclose(w.table["DEU"].to_numpy(), 0.75, atol=1e-15)


def test_export_share_weights_short_window_start():
    idx = [parse_quarter(f"1990Q{i}") for i in (1, 2)]
    # shares: Q1 (0.5, 0.5), Q2 (1.0, 0.0); MA4 with min window:
    # Q1 -> (0.5, 0.5); Q2 -> mean of two quarters = (0.75, 0.25)
    table = pd.DataFrame({"USA": [5.0, 8.0], "DEU": [5.0, 0.0]}, index=idx)
    w = export_share_weights(table, domestic="CAN")
    np.testing.assert_allclose(w.table["USA"].to_numpy(), [0.5, 0.75],
                               atol=1e-15)
    np.testing.assert_allclose(w.table["DEU"].to_numpy(), [0.5, 0.25],
                               atol=1e-15)


def test_export_share_weights_guards():
    idx = [parse_quarter("1990Q1")]
    with pytest.raises(DataError, match="negative"):
        export_share_weights(
            pd.DataFrame({"USA": [-1.0], "DEU": [2.0]}, index=idx), "CAN"
        )
    with pytest.raises(DegenerateError, match="all-zero"):
        export_share_weights(
            pd.DataFrame({"USA": [0.0], "DEU": [0.0]}, index=idx), "CAN"
        )


def test_restrict_renormalizes():
    idx = [parse_quarter("1990Q1")]
    table = pd.DataFrame(
        {"USA": [50.0], "DEU": [30.0], "CHN": [20.0]}, index=idx
    )
    w = export_share_weights(table, domestic="CAN").restrict(["USA", "DEU"])
    assert w.partners == ["USA", "DEU"]
    np.testing.assert_allclose(w.table.iloc[0].to_numpy(), [0.625, 0.375],
                               atol=1e-15)
    with pytest.raises(DegenerateError):
        w.restrict(["JPN"])


def test_aggregate_instrument_weighted_average():
    q = parse_quarter("1990Q1")
    errors = {
        "USA": pd.Series({q: 0.01}),
        "DEU": pd.Series({q: 0.02}),
    }
    weights = ExportWeights(
        domestic="AUT",
        table=pd.DataFrame({"USA": [0.25], "DEU": [0.75]}, index=[q]),
    )
    inst = aggregate_instrument(errors, weights, country="AUT")
    # 0.25*0.01 + 0.75*0.02
    assert inst.series.loc[q] == pytest.approx(0.0175, abs=1e-15)
    assert inst.scheme == "weighted"
    assert inst.partners == ("USA", "DEU")


def test_aggregate_renormalizes_over_covered_partners():
    q0, q1, q2 = (parse_quarter(f"1990Q{i}") for i in (1, 2, 3))
    errors = {
        "USA": pd.Series({q0: 0.01, q1: 0.01}),
        "DEU": pd.Series({q0: 0.02}),        # drops out after Q1
    }
    weights = ExportWeights(
        domestic="AUT",
        table=pd.DataFrame({"USA": [0.25] * 3, "DEU": [0.75] * 3},
                           index=[q0, q1, q2]),
    )
    inst = aggregate_instrument(errors, weights, country="AUT")
    assert inst.series.loc[q0] == pytest.approx(0.0175, abs=1e-15)
    # only USA covered: weight renormalizes to 1
    assert inst.series.loc[q1] == pytest.approx(0.01, abs=1e-15)
    # no partner covered: quarter absent, not zero
    assert q2 not in inst.series.index


def test_single_partner_passthrough():
    q = parse_quarter("1990Q1")
    inst = aggregate_instrument({"USA": pd.Series({q: 0.03})}, None,
                                country="CAN")
    assert inst.scheme == "single"
    assert inst.partners == ("USA",)
    assert inst.series.loc[q] == 0.03
    with pytest.raises(DataError, match="require weights"):
        aggregate_instrument(
            {"USA": pd.Series({q: 0.1}), "DEU": pd.Series({q: 0.2})},
            None, country="CAN",
        )


def test_build_forecast_errors_level_and_logdiff():
    vintages = [
        # level pair: base at horizon 0, target at horizon 1
        ForecastVintage("OECD", "1999Q4", "DEU", "1999Q4", "gdp", 0,
                        "level", 100.0),
        ForecastVintage("OECD", "1999Q4", "DEU", "2000Q1", "gdp", 1,
                        "level", 102.0),
        # plain logdiff forecast for another country
        ForecastVintage("OECD", "1999Q4", "FRA", "2000Q1", "gdp", 1,
                        "logdiff", 0.005),
    ]
    q = parse_quarter("2000Q1")
    realized = {
        "DEU": pd.Series({q: LN_101_100}),
        "FRA": pd.Series({q: 0.004}),
    }
    errors = build_forecast_errors(vintages, realized)
    assert errors["DEU"].loc[q] == pytest.approx(ERR_ORACLE, abs=1e-12)
    assert errors["FRA"].loc[q] == pytest.approx(-0.001, abs=1e-15)


def test_build_forecast_errors_semiannual_split():
    vintages = [
        ForecastVintage("IFO", "1999S2", "DEU", "2000S1", "gdp", 1,
                        "semiannual_logdiff", 0.02),
    ]
    q1, q2 = semiannual_quarters("2000S1")
    realized = {"DEU": pd.Series({q1: 0.015, q2: 0.013})}
    errors = build_forecast_errors(vintages, realized)
    # realized half-year sum 0.028 minus 0.02, split evenly
    assert errors["DEU"].loc[q1] == pytest.approx(0.004, abs=1e-15)
    assert errors["DEU"].loc[q2] == pytest.approx(0.004, abs=1e-15)
    # missing second realized quarter drops the observation
    errors2 = build_forecast_errors(
        vintages, {"DEU": pd.Series({q1: 0.015})}
    )
    assert "DEU" not in errors2


def test_build_forecast_errors_missing_base_level():
    vintages = [
        ForecastVintage("OECD", "1999Q4", "DEU", "2000Q1", "gdp", 1,
                        "level", 102.0),
    ]
    realized = {"DEU": pd.Series({parse_quarter("2000Q1"): 0.01})}
    with pytest.raises(DataError, match="no base level"):
        build_forecast_errors(vintages, realized)


def test_pretest_slope_matches_closed_form():
    rng = np.random.default_rng(5)
    q0 = parse_quarter("1990Q1")
    x = rng.normal(size=40)
    y = 0.5 * x + rng.normal(scale=0.1, size=40)
    idx = np.arange(q0, q0 + 40)
    res = pretest(
        "relevance",
        {"AUT": pd.Series(y, index=idx)},
        {"AUT": pd.Series(x, index=idx)},
    )
    xc = x - x.mean()
    slope = float(xc @ y) / float(xc @ xc)
    assert res.params[0] == pytest.approx(slope, abs=1e-12)
    assert res.nobs == 40


def test_pretest_fe_equals_per_country_demeaning():
    rng = np.random.default_rng(6)
    q0 = parse_quarter("1990Q1")
    lhs, rhs = {}, {}
    ys, xs = [], []
    for i, c in enumerate(["AUT", "BEL"]):
        x = rng.normal(size=30)
        y = 2.0 + i * 5.0 + 0.3 * x + rng.normal(scale=0.1, size=30)
        idx = np.arange(q0, q0 + 30)
        lhs[c] = pd.Series(y, index=idx)
        rhs[c] = pd.Series(x, index=idx)
        ys.append(y - y.mean())
        xs.append(x - x.mean())
    res = pretest("exogeneity", lhs, rhs, fixed_effects=True)
    yd, xd = np.concatenate(ys), np.concatenate(xs)
    slope = float(xd @ yd) / float(xd @ xd)
    assert res.params[0] == pytest.approx(slope, abs=1e-12)


def test_pretest_alignment_and_kind_guards():
    q = parse_quarter("1990Q1")
    with pytest.raises(ValueError, match="unknown pretest kind"):
        pretest("nope", {}, {})
    with pytest.raises(AlignmentError):
        pretest(
            "relevance",
            {"AUT": pd.Series({q: 1.0})},
            {"BEL": pd.Series({q: 2.0})},
        )


def test_vintage_csv_roundtrip(tmp_path):
    path = tmp_path / "vintages.csv"
    path.write_text(
        "issuer,issue_period,target_country,target_period,variable,horizon,kind,value\n"
        "OECD,1999Q4,DEU,2000Q1,gdp,1,logdiff,0.0198\n"
        "IFO,1999S2,DEU,2000S1,gdp,1,semiannual_logdiff,0.02\n",
        encoding="utf-8",
    )
    rows = read_vintages(str(path))
    assert len(rows) == 2
    assert rows[0].issuer == "OECD" and rows[0].value == 0.0198
    assert rows[1].kind == "semiannual_logdiff"

    bad = tmp_path / "bad.csv"
    bad.write_text(
        "issuer,issue_period,target_country,target_period,variable,horizon,kind,value\n"
        "OECD,1999Q4,DEU,2000Q1,gdp,one,logdiff,0.0198\n",
        encoding="utf-8",
    )
    with pytest.raises(DataError, match=r":2"):
        read_vintages(str(bad))


def test_exports_csv_roundtrip(tmp_path):
    path = tmp_path / "exports.csv"
    path.write_text(
        "domestic,partner,quarter,value\n"
        "AUT,DEU,1990Q1,30.0\n"
        "AUT,USA,1990Q1,10.0\n",
        encoding="utf-8",
    )
    tables = read_exports(str(path))
    assert list(tables) == ["AUT"]
    assert tables["AUT"].loc[parse_quarter("1990Q1"), "DEU"] == 30.0


def test_instrument_csv_roundtrip(tmp_path):
    q0 = parse_quarter("1990Q1")
    inst = {
        "AUT": InstrumentSeries(
            country="AUT",
            series=pd.Series([0.1, -0.2], index=[q0, q0 + 1]),
            partners=("DEU",),
            scheme="single",
        )
    }
    path = tmp_path / "m.csv"
    write_instrument(str(path), inst)
    back = read_instrument(str(path))
    pd.testing.assert_series_equal(back["AUT"], inst["AUT"].series)
