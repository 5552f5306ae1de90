import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fiscaliv.dataio import (
    ModelDataset,
    Rule,
    SeriesSpec,
    build_model_dataset,
    format_quarter,
    load_panel,
    parse_quarter,
    quarter_range,
)
from fiscaliv.errors import AlignmentError, DataError


def test_parse_quarter_values():
    assert parse_quarter("1990Q1") == 1990 * 4
    assert parse_quarter("1990Q4") == 1990 * 4 + 3
    assert parse_quarter("2007Q3") == 2007 * 4 + 2
    assert parse_quarter(" 1999Q2 ") == 1999 * 4 + 1


@pytest.mark.parametrize("bad", ["1990", "1990Q5", "1990Q0", "Q1", "1990-Q1",
                                 "199Q1", "1990q1", ""])
def test_parse_quarter_rejects_malformed(bad):
    with pytest.raises(DataError):
        parse_quarter(bad)


@given(st.integers(min_value=0, max_value=9999 * 4 + 3))
def test_quarter_roundtrip(idx):
    assert parse_quarter(format_quarter(idx)) == idx


def test_quarter_range_inclusive():
    assert quarter_range(8, 10) == [8, 9, 10]
    with pytest.raises(ValueError):
        quarter_range(5, 4)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_load_panel_basic(tmp_path):
    p = _write(tmp_path / "p.csv", (
        "country,quarter,variable,value,unit\n"
        "AUT,1990Q1,g,10.0,bn\n"
        "AUT,1990Q2,g,11.0,bn\n"
        "AUT,1990Q1,gdp,50.0,bn\n"
        "AUT,1990Q2,gdp,52.0,bn\n"
    ))
    panel = load_panel(p)
    assert panel.countries == ["AUT"]
    table = panel.pivot("AUT")
    assert list(table.columns) == ["g", "gdp"]
    assert table.loc[parse_quarter("1990Q2"), "g"] == 11.0


def test_load_panel_line_precise_errors(tmp_path):
    p = _write(tmp_path / "p.csv", (
        "country,quarter,variable,value,unit\n"
        "AUT,1990Q1,g,10.0,bn\n"
        "AUT,1990X1,g,11.0,bn\n"
    ))
    with pytest.raises(DataError, match=r":3:"):
        load_panel(p)
    p2 = _write(tmp_path / "p2.csv", (
        "country,quarter,variable,value,unit\n"
        "AUT,1990Q1,g,ten,bn\n"
    ))
    with pytest.raises(DataError, match=r":2:.*non-numeric"):
        load_panel(p2)
    p3 = _write(tmp_path / "p3.csv", "country,quarter,value\nAUT,1990Q1,1\n")
    with pytest.raises(DataError, match="header"):
        load_panel(p3)
    p4 = _write(tmp_path / "p4.csv", (
        "country,quarter,variable,value,unit\n"
        "AUT,1990Q1,g,inf,bn\n"
    ))
    with pytest.raises(DataError, match="non-finite"):
        load_panel(p4)


def test_load_panel_duplicate_key(tmp_path):
    p = _write(tmp_path / "p.csv", (
        "country,quarter,variable,value,unit\n"
        "AUT,1990Q1,g,10.0,bn\n"
        "AUT,1990Q1,g,10.5,bn\n"
    ))
    with pytest.raises(DataError, match="duplicate key"):
        load_panel(p)


def test_load_panel_spec_requires_raw_series(tmp_path):
    p = _write(tmp_path / "p.csv", (
        "country,quarter,variable,value,unit\n"
        "AUT,1990Q1,g,10.0,bn\n"
    ))
    spec = SeriesSpec(rules={"g": Rule(), "gdp": Rule()})
    with pytest.raises(DataError, match="missing raw series.*gdp"):
        load_panel(p, spec)


def _tiny_panel(tmp_path, rows):
    lines = ["country,quarter,variable,value,unit"]
    lines += [",".join(str(x) for x in r) for r in rows]
    return _write(tmp_path / "panel.csv", "\n".join(lines) + "\n")


def test_transformations_deflate_percapita_log(tmp_path):
    # g = log(nominal / deflator / pop): hand-checked single observation
    rows = [
        ("AUT", "1990Q1", "g", 10.0, "bn"),
        ("AUT", "1990Q1", "defl", 2.0, "index"),
        ("AUT", "1990Q1", "pop", 5.0, "mn"),
        ("AUT", "1990Q2", "g", 12.0, "bn"),
        ("AUT", "1990Q2", "defl", 2.5, "index"),
        ("AUT", "1990Q2", "pop", 5.0, "mn"),
    ]
    spec = SeriesSpec(
        rules={"g": Rule(deflator="defl", per_capita=True, log=True)}
    )
    data = build_model_dataset(load_panel(_tiny_panel(tmp_path, rows)), spec)
    want0 = math.log(10.0 / 2.0 / 5.0)
    want1 = math.log(12.0 / 2.5 / 5.0)
    np.testing.assert_allclose(data.data["AUT"][:, 0], [want0, want1],
                               rtol=0, atol=1e-15)


def test_nonpositive_before_log_names_cell(tmp_path):
    rows = [
        ("AUT", "1990Q1", "rer", 1.0, "x"),
        ("AUT", "1990Q2", "rer", -3.0, "x"),
    ]
    spec = SeriesSpec(rules={"rer": Rule(log=True)})
    with pytest.raises(DataError, match="AUT, 1990Q2, rer"):
        build_model_dataset(load_panel(_tiny_panel(tmp_path, rows)), spec)


def test_interior_gap_is_hard_error(tmp_path):
    rows = [
        ("AUT", "1990Q1", "g", 1.0, "x"),
        ("AUT", "1990Q3", "g", 3.0, "x"),
        ("AUT", "1990Q1", "gdp", 9.0, "x"),
        ("AUT", "1990Q2", "gdp", 9.0, "x"),
        ("AUT", "1990Q3", "gdp", 9.0, "x"),
    ]
    spec = SeriesSpec(rules={"g": Rule(), "gdp": Rule()})
    with pytest.raises(DataError, match="AUT, 1990Q2, g.*missing value inside"):
        build_model_dataset(load_panel(_tiny_panel(tmp_path, rows)), spec)


def test_common_interval_trim(tmp_path):
    # g covers Q1-Q3, gdp covers Q2-Q4: common sample is Q2-Q3
    rows = [
        ("AUT", "1990Q1", "g", 1.0, "x"),
        ("AUT", "1990Q2", "g", 2.0, "x"),
        ("AUT", "1990Q3", "g", 3.0, "x"),
        ("AUT", "1990Q2", "gdp", 8.0, "x"),
        ("AUT", "1990Q3", "gdp", 9.0, "x"),
        ("AUT", "1990Q4", "gdp", 10.0, "x"),
    ]
    spec = SeriesSpec(rules={"g": Rule(), "gdp": Rule()})
    data = build_model_dataset(load_panel(_tiny_panel(tmp_path, rows)), spec)
    assert data.window("AUT") == ("1990Q2", "1990Q3")
    np.testing.assert_array_equal(data.data["AUT"],
                                  [[2.0, 8.0], [3.0, 9.0]])


def test_window_clipping(tmp_path):
    rows = [("AUT", f"199{i // 4}Q{i % 4 + 1}", "g", float(i), "x")
            for i in range(8)]
    spec = SeriesSpec(
        rules={"g": Rule()},
        windows={"AUT": ("1990Q3", "1991Q2")},
    )
    data = build_model_dataset(load_panel(_tiny_panel(tmp_path, rows)), spec)
    assert data.window("AUT") == ("1990Q3", "1991Q2")
    assert data.data["AUT"].shape == (4, 1)


def test_disjoint_variables_raise_alignment(tmp_path):
    rows = [
        ("AUT", "1990Q1", "g", 1.0, "x"),
        ("AUT", "1991Q1", "gdp", 2.0, "x"),
    ]
    spec = SeriesSpec(rules={"g": Rule(), "gdp": Rule()})
    with pytest.raises(AlignmentError, match="share no common quarters"):
        build_model_dataset(load_panel(_tiny_panel(tmp_path, rows)), spec)


def test_shares_computed_as_sample_mean_ratios(tmp_path):
    rows = [
        ("AUT", "1990Q1", "g", 10.0, "x"),
        ("AUT", "1990Q2", "g", 30.0, "x"),
        ("AUT", "1990Q1", "gdp", 100.0, "x"),
        ("AUT", "1990Q2", "gdp", 100.0, "x"),
    ]
    spec = SeriesSpec(rules={"g": Rule(), "gdp": Rule()})
    data = build_model_dataset(load_panel(_tiny_panel(tmp_path, rows)), spec)
    # mean of (0.1, 0.3)
    assert data.shares["AUT"]["s_g"] == pytest.approx(0.2, abs=1e-15)


def test_shares_pinned_and_validated(tmp_path):
    rows = [("AUT", "1990Q1", "g", 1.0, "x")]
    spec = SeriesSpec(rules={"g": Rule()},
                      shares={"*": {"s_g": 0.25, "s_r": 0.2}})
    data = build_model_dataset(load_panel(_tiny_panel(tmp_path, rows)), spec)
    assert data.shares["AUT"] == {"s_g": 0.25, "s_r": 0.2}
    bad = SeriesSpec(rules={"g": Rule()}, shares={"AUT": {"s_g": 1.5}})
    with pytest.raises(DataError, match="outside"):
        build_model_dataset(load_panel(_tiny_panel(tmp_path, rows)), bad)


def test_cab_bounds_check(tmp_path):
    rows = [("AUT", "1990Q1", "cab", 1.2, "share")]
    spec = SeriesSpec(rules={"cab": Rule()})
    with pytest.raises(DataError, match="cab outside"):
        build_model_dataset(load_panel(_tiny_panel(tmp_path, rows)), spec)


def test_canonical_variable_order():
    spec = SeriesSpec(rules={"extra": Rule(), "gdp": Rule(), "g": Rule(),
                             "fe_g": Rule()})
    assert spec.variables == ["g", "gdp", "fe_g", "extra"]


def test_series_spec_json_roundtrip(tmp_path):
    spec = SeriesSpec(
        rules={"g": Rule(source="gov", deflator="defl", per_capita=True,
                         log=True),
               "srate": Rule()},
        population="population",
        windows={"AUT": ("1990Q1", "2007Q4")},
        shares={"AUT": {"s_g": 0.2}},
    )
    again = SeriesSpec.from_json(spec.to_json())
    assert again.rules == spec.rules
    assert again.population == spec.population
    assert again.windows == spec.windows
    assert again.shares == spec.shares


def test_pooled_shares_weighted_by_observations():
    data = ModelDataset(
        variables=["g"],
        data={"A": np.zeros((10, 1)), "B": np.zeros((30, 1))},
        quarters={"A": np.arange(10), "B": np.arange(30)},
        shares={"A": {"s_g": 0.1}, "B": {"s_g": 0.3}},
    )
    # (10*0.1 + 30*0.3) / 40
    assert data.pooled_shares()["s_g"] == pytest.approx(0.25, abs=1e-15)


def test_write_panel_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    data = ModelDataset(
        variables=["g", "gdp"],
        data={"A": rng.normal(size=(6, 2))},
        quarters={"A": np.arange(parse_quarter("2000Q1"),
                                 parse_quarter("2000Q1") + 6)},
        shares={"A": {"s_g": 0.2}},
    )
    path = tmp_path / "panel.csv"
    data.write_panel_csv(str(path))
    spec = SeriesSpec.passthrough(["g", "gdp"], shares={"A": {"s_g": 0.2}})
    back = build_model_dataset(load_panel(str(path), spec), spec)
    np.testing.assert_array_equal(back.data["A"], data.data["A"])
    np.testing.assert_array_equal(back.quarters["A"], data.quarters["A"])
