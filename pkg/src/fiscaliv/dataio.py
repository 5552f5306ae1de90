"""Panel ingestion and model-dataset construction.

Raw data arrives as a tidy CSV (``country,quarter,variable,value,unit``,
quarters as ``YYYYQn``).  A :class:`SeriesSpec` says how each model variable
is built from the raw series (deflation, per-capita scaling, logs) and the
result is a per-country matrix of aligned, gap-free observations plus the
nominal spending/revenue shares used later to express responses in % of GDP.
"""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import AlignmentError, DataError

# canonical column order of the full model dataset
MODEL_VARIABLES = ("g", "r", "gdp", "cab", "rer", "srate", "defl", "fe_g", "fe_gdp")

_QUARTER_RE = re.compile(r"^(\d{4})Q([1-4])$")


def parse_quarter(text: str) -> int:
    """``YYYYQn`` -> integer index (year*4 + n - 1), totally ordered."""
    m = _QUARTER_RE.match(str(text).strip())
    if m is None:
        raise DataError(f"bad quarter {text!r}, expected YYYYQn")
    return int(m.group(1)) * 4 + int(m.group(2)) - 1


def format_quarter(index: int) -> str:
    year, q = divmod(int(index), 4)
    return f"{year:04d}Q{q + 1}"


def quarter_range(first: int, last: int) -> list[int]:
    """Inclusive run of quarter indexes."""
    if last < first:
        raise ValueError("last quarter precedes first")
    return list(range(first, last + 1))


@dataclass(frozen=True)
class Rule:
    """Construction rule for one model variable.

    ``source`` is the raw variable name (defaults to the model name),
    ``deflator`` the raw price-index variable to divide by (or None).
    """

    source: str | None = None
    deflator: str | None = None
    per_capita: bool = False
    log: bool = False


@dataclass
class SeriesSpec:
    """Per-variable transformation rules plus sample windows and shares.

    ``shares`` may pin s_g/s_r per country (key = country id, ``*`` as a
    default); otherwise they are computed as sample means of the raw
    (nominal) g/gdp and r/gdp ratios.
    """

    rules: dict[str, Rule]
    population: str = "pop"
    windows: dict[str, tuple[str, str]] = field(default_factory=dict)
    shares: dict[str, dict[str, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.rules:
            raise DataError("series spec declares no variables")
        for name, rule in self.rules.items():
            if not isinstance(rule, Rule):
                raise DataError(f"rule for {name!r} is not a Rule")

    @property
    def variables(self) -> list[str]:
        """Model variables in canonical order, extras after."""
        ordered = [v for v in MODEL_VARIABLES if v in self.rules]
        ordered += [v for v in self.rules if v not in MODEL_VARIABLES]
        return ordered

    def raw_variables(self) -> set[str]:
        """All raw series any rule reads."""
        needed: set[str] = set()
        for name, rule in self.rules.items():
            needed.add(rule.source or name)
            if rule.deflator:
                needed.add(rule.deflator)
            if rule.per_capita:
                needed.add(self.population)
        return needed

    @staticmethod
    def passthrough(variables: list[str],
                    shares: dict[str, dict[str, float]] | None = None) -> "SeriesSpec":
        """Identity rules: data already in model units (e.g. simulated logs)."""
        return SeriesSpec(
            rules={v: Rule() for v in variables},
            shares=dict(shares or {}),
        )

    @staticmethod
    def default_nine() -> "SeriesSpec":
        """Baseline layout: real per-capita logs for g, r, gdp; log deflator
        and real exchange rate; shares/rates and forecast errors untouched."""
        return SeriesSpec(
            rules={
                "g": Rule(deflator="defl", per_capita=True, log=True),
                "r": Rule(deflator="defl", per_capita=True, log=True),
                "gdp": Rule(deflator="defl", per_capita=True, log=True),
                "cab": Rule(),
                "rer": Rule(log=True),
                "srate": Rule(),
                "defl": Rule(log=True),
                "fe_g": Rule(),
                "fe_gdp": Rule(),
            }
        )

    @staticmethod
    def from_json(source) -> "SeriesSpec":
        """Load from a JSON document (path or already-parsed mapping)."""
        if isinstance(source, (str,)):
            with open(source, encoding="utf-8") as fh:
                doc = json.load(fh)
        else:
            doc = dict(source)
        rules = {
            name: Rule(
                source=rd.get("source"),
                deflator=rd.get("deflator"),
                per_capita=bool(rd.get("per_capita", False)),
                log=bool(rd.get("log", False)),
            )
            for name, rd in doc.get("variables", {}).items()
        }
        windows = {
            c: (str(w[0]), str(w[1])) for c, w in doc.get("windows", {}).items()
        }
        shares = {
            c: {k: float(v) for k, v in s.items()}
            for c, s in doc.get("shares", {}).items()
        }
        return SeriesSpec(
            rules=rules,
            population=doc.get("population", "pop"),
            windows=windows,
            shares=shares,
        )

    def to_json(self) -> dict:
        return {
            "variables": {
                name: {
                    k: v
                    for k, v in (
                        ("source", r.source),
                        ("deflator", r.deflator),
                        ("per_capita", r.per_capita),
                        ("log", r.log),
                    )
                    if v
                }
                for name, r in self.rules.items()
            },
            "population": self.population,
            "windows": {c: list(w) for c, w in self.windows.items()},
            "shares": self.shares,
        }


@dataclass
class RawPanel:
    """Validated long-format panel: one row per (country, quarter, variable)."""

    frame: pd.DataFrame  # columns: country, qidx, variable, value, unit

    def __post_init__(self) -> None:
        dup = self.frame.duplicated(["country", "qidx", "variable"])
        if dup.any():
            row = self.frame[dup].iloc[0]
            raise DataError(
                "duplicate key "
                f"({row['country']}, {format_quarter(row['qidx'])}, {row['variable']})"
            )

    @property
    def countries(self) -> list[str]:
        return sorted(self.frame["country"].unique())

    def coverage(self) -> dict[str, dict]:
        """Per-country coverage: common quarter count across variables and the
        (first, last, count) run per variable."""
        report: dict[str, dict] = {}
        for country, sub in self.frame.groupby("country", sort=True):
            per_var = {}
            common_first, common_last = -(10**9), 10**9
            for var, rows in sub.groupby("variable", sort=True):
                q = np.sort(rows["qidx"].to_numpy())
                per_var[var] = {
                    "first": format_quarter(q[0]),
                    "last": format_quarter(q[-1]),
                    "n_quarters": int(q.size),
                }
                common_first = max(common_first, int(q[0]))
                common_last = min(common_last, int(q[-1]))
            n_common = max(0, common_last - common_first + 1)
            report[country] = {
                "variables": per_var,
                "common_quarters": n_common,
                "common_first": format_quarter(common_first) if n_common else None,
                "common_last": format_quarter(common_last) if n_common else None,
            }
        return report

    def pivot(self, country: str) -> pd.DataFrame:
        """Quarter-by-variable value table for one country (NaN where absent)."""
        sub = self.frame[self.frame["country"] == country]
        if sub.empty:
            raise DataError(f"no rows for country {country!r}")
        return sub.pivot(index="qidx", columns="variable", values="value").sort_index()


PANEL_HEADER = ["country", "quarter", "variable", "value", "unit"]


def load_panel(path: str, spec: SeriesSpec | None = None) -> RawPanel:
    """Read and validate a tidy panel CSV.

    Row-level validation is line-precise: a malformed quarter or value names
    the offending physical line.  When a spec is given, raw series it needs
    must be present for every country.
    """
    countries: list[str] = []
    qidx: list[int] = []
    variables: list[str] = []
    values: list[float] = []
    units: list[str] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != PANEL_HEADER:
            raise DataError(
                f"{path}: header {header!r} != {','.join(PANEL_HEADER)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            country, quarter, variable, value, unit = (f.strip() for f in row)
            if not country or not variable:
                raise DataError(f"{path}:{lineno}: empty country or variable")
            try:
                q = parse_quarter(quarter)
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            try:
                v = float(value)
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: non-numeric value {value!r}"
                ) from None
            if not np.isfinite(v):
                raise DataError(f"{path}:{lineno}: non-finite value {value!r}")
            countries.append(country)
            qidx.append(q)
            variables.append(variable)
            values.append(v)
            units.append(unit)
    if not countries:
        raise DataError(f"{path}: no data rows")
    frame = pd.DataFrame(
        {
            "country": countries,
            "qidx": np.asarray(qidx, dtype=np.int64),
            "variable": variables,
            "value": np.asarray(values, dtype=float),
            "unit": units,
        }
    )
    panel = RawPanel(frame)
    if spec is not None:
        needed = spec.raw_variables()
        for country in panel.countries:
            have = set(frame.loc[frame["country"] == country, "variable"])
            missing = sorted(needed - have)
            if missing:
                raise DataError(f"{country}: missing raw series {missing}")
    return panel


@dataclass
class ModelDataset:
    """Aligned per-country model matrices plus share metadata.

    ``data[c]`` is a T_c x n float matrix over ``variables`` with no missing
    values; ``quarters[c]`` is the matching contiguous quarter-index array.
    """

    variables: list[str]
    data: dict[str, np.ndarray]
    quarters: dict[str, np.ndarray]
    shares: dict[str, dict[str, float]]

    @property
    def countries(self) -> list[str]:
        return sorted(self.data)

    def column(self, variable: str) -> int:
        try:
            return self.variables.index(variable)
        except ValueError:
            raise DataError(f"variable {variable!r} not in dataset") from None

    def window(self, country: str) -> tuple[str, str]:
        q = self.quarters[country]
        return format_quarter(int(q[0])), format_quarter(int(q[-1]))

    def pooled_shares(self) -> dict[str, float]:
        """Observation-weighted mean of the per-country shares."""
        keys = sorted({k for s in self.shares.values() for k in s})
        out: dict[str, float] = {}
        for key in keys:
            num = den = 0.0
            for c in self.countries:
                if key in self.shares.get(c, {}):
                    w = float(self.data[c].shape[0])
                    num += w * self.shares[c][key]
                    den += w
            if den > 0.0:
                out[key] = num / den
        if not out:
            raise DataError("no shares available in any country")
        return out

    def to_tidy(self) -> pd.DataFrame:
        """One row per country-quarter, one named column per variable."""
        parts = []
        for country in self.countries:
            q = self.quarters[country]
            block = pd.DataFrame(self.data[country], columns=self.variables)
            block.insert(0, "quarter", [format_quarter(int(i)) for i in q])
            block.insert(0, "country", country)
            parts.append(block)
        return pd.concat(parts, ignore_index=True)

    def write_csv(self, path: str) -> None:
        frame = self.to_tidy()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(frame.columns) + "\n")
            for row in frame.itertuples(index=False):
                cells = [row[0], row[1]] + [repr(float(x)) for x in row[2:]]
                fh.write(",".join(cells) + "\n")

    def write_panel_csv(self, path: str, unit: str = "model") -> None:
        """Long-format dump in the raw ingestion schema, so a dataset can be
        fed back through load_panel with passthrough rules."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(PANEL_HEADER) + "\n")
            for country in self.countries:
                q = self.quarters[country]
                block = self.data[country]
                for j, var in enumerate(self.variables):
                    for t in range(block.shape[0]):
                        fh.write(
                            f"{country},{format_quarter(int(q[t]))},{var},"
                            f"{float(block[t, j])!r},{unit}\n"
                        )


def _first_last_valid(col: np.ndarray) -> tuple[int, int]:
    ok = np.flatnonzero(np.isfinite(col))
    if ok.size == 0:
        return -1, -1
    return int(ok[0]), int(ok[-1])


def _transform(pivot: pd.DataFrame, name: str, rule: Rule, spec: SeriesSpec,
               country: str) -> np.ndarray:
    source = rule.source or name
    if source not in pivot.columns:
        raise DataError(f"{country}: raw series {source!r} absent")
    x = pivot[source].to_numpy(dtype=float).copy()
    if rule.deflator:
        if rule.deflator not in pivot.columns:
            raise DataError(f"{country}: deflator {rule.deflator!r} absent")
        x = x / pivot[rule.deflator].to_numpy(dtype=float)
    if rule.per_capita:
        if spec.population not in pivot.columns:
            raise DataError(f"{country}: population {spec.population!r} absent")
        x = x / pivot[spec.population].to_numpy(dtype=float)
    if rule.log:
        bad = np.flatnonzero(np.isfinite(x) & (x <= 0.0))
        if bad.size:
            q = format_quarter(int(pivot.index[bad[0]]))
            raise DataError(f"{country}, {q}, {name}: nonpositive value before log")
        with np.errstate(invalid="ignore"):
            x = np.log(x)
    return x


def build_model_dataset(raw: RawPanel, spec: SeriesSpec) -> ModelDataset:
    """Assemble aligned per-country matrices from raw series.

    Each country is clipped to its optional window, transformed per rule,
    then trimmed to the interval every variable covers.  A missing value
    inside that interval is an error, never interpolated.
    """
    variables = spec.variables
    data: dict[str, np.ndarray] = {}
    quarters: dict[str, np.ndarray] = {}
    shares: dict[str, dict[str, float]] = {}
    for country in raw.countries:
        pivot = raw.pivot(country)
        if country in spec.windows:
            w0, w1 = (parse_quarter(s) for s in spec.windows[country])
            pivot = pivot.loc[(pivot.index >= w0) & (pivot.index <= w1)]
            if pivot.empty:
                raise DataError(f"{country}: window leaves no observations")
        # reindex to a full contiguous grid so gaps surface as NaN
        grid = quarter_range(int(pivot.index[0]), int(pivot.index[-1]))
        pivot = pivot.reindex(grid)
        cols = np.column_stack(
            [_transform(pivot, v, spec.rules[v], spec, country) for v in variables]
        )
        lo, hi = 0, cols.shape[0] - 1
        for j, v in enumerate(variables):
            f, l = _first_last_valid(cols[:, j])
            if f < 0:
                raise DataError(f"{country}: variable {v!r} has no valid values")
            lo, hi = max(lo, f), min(hi, l)
        if hi < lo:
            raise AlignmentError(f"{country}: variables share no common quarters")
        block = cols[lo : hi + 1]
        gaps = np.argwhere(~np.isfinite(block))
        if gaps.size:
            t, j = gaps[0]
            q = format_quarter(int(grid[lo + t]))
            raise DataError(
                f"{country}, {q}, {variables[j]}: missing value inside sample"
            )
        if "cab" in variables:
            cab = block[:, variables.index("cab")]
            if np.any(np.abs(cab) > 1.0):
                raise DataError(f"{country}: cab outside [-1, 1]")
        data[country] = block
        quarters[country] = np.asarray(grid[lo : hi + 1], dtype=np.int64)
        shares[country] = _country_shares(pivot, spec, country, lo, hi)
    return ModelDataset(
        variables=variables, data=data, quarters=quarters, shares=shares
    )


def _country_shares(pivot: pd.DataFrame, spec: SeriesSpec, country: str,
                    lo: int, hi: int) -> dict[str, float]:
    pinned = spec.shares.get(country, spec.shares.get("*"))
    if pinned is not None:
        out = {k: float(v) for k, v in pinned.items()}
    else:
        out = {}
        if "gdp" in pivot.columns:
            gdp = pivot["gdp"].to_numpy(dtype=float)[lo : hi + 1]
            for key, src in (("s_g", "g"), ("s_r", "r")):
                if src in pivot.columns:
                    num = pivot[src].to_numpy(dtype=float)[lo : hi + 1]
                    ok = np.isfinite(num) & np.isfinite(gdp)
                    if ok.any():
                        out[key] = float(np.mean(num[ok] / gdp[ok]))
    for key, val in out.items():
        if key in ("s_g", "s_r") and not 0.0 < val < 1.0:
            raise DataError(f"{country}: share {key}={val} outside (0, 1)")
    return out
