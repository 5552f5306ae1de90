"""Trading-partner forecast-error instrument.

Pipeline: forecast vintages (level or log-difference, quarterly or
semiannual) -> one-step-ahead forecast errors per partner country ->
export-share weights (4-quarter trailing moving average, renormalized over
partners actually covered) -> weighted average instrument m per domestic
country.  Also hosts the relevance/exogeneity pretest regressions.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .dataio import format_quarter, parse_quarter
from .errors import AlignmentError, DataError, DegenerateError, DesignError
from .regress import CovSpec, RegressionResult, ols, within_demean

KIND_LEVEL = "level"
KIND_LOGDIFF = "logdiff"
KIND_SEMIANNUAL = "semiannual_logdiff"
_KINDS = (KIND_LEVEL, KIND_LOGDIFF, KIND_SEMIANNUAL)

DEFAULT_G7 = ("CAN", "DEU", "FRA", "GBR", "ITA", "JPN", "USA")

_SEMI_RE = re.compile(r"^(\d{4})S([12])$")


def semiannual_quarters(period: str) -> tuple[int, int]:
    """``YYYYSn`` -> the half-year's two quarter indexes (S1 = Q1+Q2)."""
    m = _SEMI_RE.match(str(period).strip())
    if m is None:
        raise DataError(f"bad semiannual period {period!r}, expected YYYYSn")
    year, half = int(m.group(1)), int(m.group(2))
    q0 = year * 4 + (0 if half == 1 else 2)
    return q0, q0 + 1


def _period_start(period: str) -> int:
    """Start quarter of a quarterly or semiannual period tag."""
    if _SEMI_RE.match(str(period).strip()):
        return semiannual_quarters(period)[0]
    return parse_quarter(period)


@dataclass(frozen=True)
class ForecastVintage:
    """One forecast observation from a survey/outlook release."""

    issuer: str
    issue_period: str
    target_country: str
    target_period: str
    variable: str
    horizon: int
    kind: str
    value: float

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise DataError(f"unknown forecast kind {self.kind!r}")
        if self.horizon < 0:
            raise DataError(f"horizon {self.horizon} < 0")
        if self.horizon >= 1 and _period_start(self.target_period) <= _period_start(
            self.issue_period
        ):
            raise DataError(
                f"target {self.target_period} not after issue {self.issue_period}"
            )


def level_to_logdiff_forecast(vintage: ForecastVintage,
                              prior_level: float) -> ForecastVintage:
    """Convert a level forecast to a log-difference against the vintage's own
    base-period level."""
    if vintage.kind != KIND_LEVEL:
        raise DataError(f"expected level kind, got {vintage.kind!r}")
    if vintage.value <= 0.0 or prior_level <= 0.0:
        raise DataError(
            f"nonpositive level in {vintage.target_country} {vintage.target_period}"
        )
    return replace(
        vintage,
        kind=KIND_LOGDIFF,
        value=math.log(vintage.value) - math.log(prior_level),
    )


def forecast_error(realized_period: str, realized: float,
                   forecast: ForecastVintage) -> tuple[str, float]:
    """Realized minus forecast, both quarterly log-differences, horizon one."""
    if forecast.kind != KIND_LOGDIFF:
        raise DataError(f"expected logdiff kind, got {forecast.kind!r}")
    if forecast.horizon != 1:
        raise DataError(f"expected one-step forecast, horizon={forecast.horizon}")
    if parse_quarter(forecast.target_period) != parse_quarter(realized_period):
        raise AlignmentError(
            f"realized {realized_period} != target {forecast.target_period}"
        )
    return realized_period, float(realized) - forecast.value


def interpolate_semiannual(period: str, value: float) -> list[tuple[str, float]]:
    """Spread a semiannual log-difference evenly over its two quarters."""
    q0, q1 = semiannual_quarters(period)
    half = float(value) / 2.0
    return [(format_quarter(q0), half), (format_quarter(q1), half)]


@dataclass
class ExportWeights:
    """Smoothed export shares: quarter-index by partner, rows sum to one over
    the partners covered that quarter."""

    domestic: str
    table: pd.DataFrame
    window: int = 4

    def restrict(self, keep) -> "ExportWeights":
        """Drop partners outside ``keep`` and renormalize each quarter."""
        cols = [c for c in self.table.columns if c in set(keep)]
        if not cols:
            raise DegenerateError(f"{self.domestic}: no partners left after filter")
        return ExportWeights(
            domestic=self.domestic,
            table=_row_normalize(self.table[cols]),
            window=self.window,
        )

    @property
    def partners(self) -> list[str]:
        return list(self.table.columns)


def _row_normalize(table: pd.DataFrame) -> pd.DataFrame:
    sums = table.sum(axis=1, skipna=True)
    out = table.div(sums, axis=0)
    out[sums <= 0.0] = np.nan
    return out


def export_share_weights(exports: pd.DataFrame, domestic: str = "",
                         window: int = 4) -> ExportWeights:
    """Trailing moving average of within-quarter export shares.

    ``exports``: quarter-index by partner nominal export values (NaN where
    unreported).  The first quarters use the shorter available window rather
    than being dropped.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    table = exports.sort_index().astype(float)
    if (table.to_numpy(dtype=float) < 0.0).any():
        raise DataError(f"{domestic}: negative export value")
    totals = table.sum(axis=1, skipna=True)
    zero = totals[totals <= 0.0]
    if len(zero):
        raise DegenerateError(
            f"{domestic}: all-zero exports in {format_quarter(int(zero.index[0]))}"
        )
    shares = table.div(totals, axis=0)
    smoothed = shares.rolling(window=window, min_periods=1).mean()
    return ExportWeights(domestic=domestic, table=_row_normalize(smoothed),
                         window=window)


@dataclass
class InstrumentSeries:
    """The proxy m for one country, with construction metadata."""

    country: str
    series: pd.Series  # index: quarter index, values: m
    partners: tuple[str, ...]
    scheme: str  # "weighted" | "single"

    def quarters(self) -> list[str]:
        return [format_quarter(int(q)) for q in self.series.index]


def aggregate_instrument(errors: dict[str, pd.Series],
                         weights: ExportWeights | None,
                         country: str = "") -> InstrumentSeries:
    """Weighted average of partner forecast errors per quarter.

    Weights are renormalized each quarter over the partners with an error
    observation; quarters with no covered partner are absent from the
    output, not zero.  With ``weights=None`` a single partner passes through.
    """
    if not errors:
        raise DataError(f"{country}: no partner forecast errors")
    if weights is None:
        if len(errors) != 1:
            raise DataError(f"{country}: multiple partners require weights")
        (partner, series), = errors.items()
        return InstrumentSeries(
            country=country,
            series=series.dropna().sort_index().astype(float),
            partners=(partner,),
            scheme="single",
        )
    err = pd.DataFrame(errors).sort_index()
    common = [p for p in err.columns if p in weights.table.columns]
    if not common:
        raise DataError(f"{country}: no partner overlaps the weight table")
    err = err[common]
    w = weights.table.reindex(err.index)[common]
    mask = err.notna() & w.notna()
    wm = w.where(mask)
    wsum = wm.sum(axis=1, skipna=True)
    covered = wsum > 0.0
    m = (wm * err).sum(axis=1, skipna=True)[covered] / wsum[covered]
    return InstrumentSeries(
        country=country,
        series=m.astype(float),
        partners=tuple(common),
        scheme="weighted",
    )


def build_forecast_errors(vintages: list[ForecastVintage],
                          realized: dict[str, pd.Series],
                          variable: str = "gdp") -> dict[str, pd.Series]:
    """One-step forecast errors per target country, in quarterly units.

    Level forecasts are converted against the same vintage's horizon-0 level;
    semiannual log-differences are compared with the realized two-quarter sum
    and the error split evenly across the half-year's quarters.
    """
    base_levels: dict[tuple, float] = {}
    for v in vintages:
        if v.variable == variable and v.kind == KIND_LEVEL and v.horizon == 0:
            base_levels[(v.issuer, v.issue_period, v.target_country)] = v.value
    out: dict[str, dict[int, float]] = {}
    for v in vintages:
        if v.variable != variable or v.horizon != 1:
            continue
        country = v.target_country
        if country not in realized:
            continue
        real = realized[country]
        if v.kind == KIND_LEVEL:
            key = (v.issuer, v.issue_period, v.target_country)
            if key not in base_levels:
                raise DataError(
                    f"no base level for {v.issuer} {v.issue_period} {country}"
                )
            v = level_to_logdiff_forecast(v, base_levels[key])
        if v.kind == KIND_LOGDIFF:
            q = parse_quarter(v.target_period)
            if q not in real.index or not np.isfinite(real.loc[q]):
                continue
            period, err = forecast_error(v.target_period, float(real.loc[q]), v)
            out.setdefault(country, {})[parse_quarter(period)] = err
        else:  # semiannual log-difference
            q0, q1 = semiannual_quarters(v.target_period)
            if not all(
                q in real.index and np.isfinite(real.loc[q]) for q in (q0, q1)
            ):
                continue
            realized_semi = float(real.loc[q0] + real.loc[q1])
            semi_err = realized_semi - v.value
            for period, val in interpolate_semiannual(v.target_period, semi_err):
                out.setdefault(country, {})[parse_quarter(period)] = val
    return {c: pd.Series(d).sort_index() for c, d in out.items()}


def pretest(kind: str, lhs: dict[str, pd.Series], rhs: dict[str, pd.Series],
            fixed_effects: bool = False, cov: str = "hc0",
            nw_lags: int = 0) -> RegressionResult:
    """Instrument pretest regression over a stacked country panel.

    ``kind='relevance'`` regresses domestic output forecast errors on m;
    ``kind='exogeneity'`` regresses m on domestic fiscal forecast errors.
    Callers pass the dependent series as ``lhs`` and the regressor as
    ``rhs`` accordingly.  ``cov`` is one of hc0 | newey_west |
    two_way_cluster; cluster labels are the stacked country and quarter ids.
    """
    if kind not in ("relevance", "exogeneity"):
        raise ValueError(f"unknown pretest kind {kind!r}")
    ys, xs, countries, qidx = [], [], [], []
    for country in sorted(lhs):
        if country not in rhs:
            continue
        a, b = lhs[country].dropna(), rhs[country].dropna()
        common = a.index.intersection(b.index)
        if len(common) == 0:
            continue
        ys.append(a.loc[common].to_numpy(dtype=float))
        xs.append(b.loc[common].to_numpy(dtype=float))
        countries += [country] * len(common)
        qidx += [int(q) for q in common]
    if not ys:
        raise AlignmentError("pretest series share no observations")
    y = np.concatenate(ys)
    x = np.concatenate(xs)
    labels = np.asarray(countries)
    time = np.asarray(qidx)

    if cov == "hc0":
        cspec = CovSpec.hc0()
    elif cov == "newey_west":
        cspec = CovSpec.newey_west(nw_lags, groups=labels)
    elif cov == "two_way_cluster":
        cspec = CovSpec.two_way_cluster(labels, time)
    else:
        raise ValueError(f"unknown covariance {cov!r}")

    if fixed_effects:
        n_groups = len(np.unique(labels))
        if y.shape[0] <= n_groups + 1:
            raise DesignError("fewer observations than parameters in pretest")
        yd, _ = within_demean(y, labels)
        xd, _ = within_demean(x, labels)
        return ols(yd, xd[:, None], cspec, names=["slope"], extra_dof=n_groups)
    X = np.column_stack([x, np.ones_like(x)])
    return ols(y, X, cspec, names=["slope", "const"])


# ---------------------------------------------------------------------------
# CSV interfaces

VINTAGE_HEADER = ["issuer", "issue_period", "target_country", "target_period",
                  "variable", "horizon", "kind", "value"]
EXPORT_HEADER = ["domestic", "partner", "quarter", "value"]
INSTRUMENT_HEADER = ["country", "quarter", "m"]


def read_vintages(path: str) -> list[ForecastVintage]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != VINTAGE_HEADER:
            raise DataError(f"{path}: header != {','.join(VINTAGE_HEADER)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 8:
                raise DataError(f"{path}:{lineno}: expected 8 fields")
            try:
                out.append(
                    ForecastVintage(
                        issuer=row[0].strip(),
                        issue_period=row[1].strip(),
                        target_country=row[2].strip(),
                        target_period=row[3].strip(),
                        variable=row[4].strip(),
                        horizon=int(row[5]),
                        kind=row[6].strip(),
                        value=float(row[7]),
                    )
                )
            except (ValueError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return out


def read_exports(path: str) -> dict[str, pd.DataFrame]:
    """Per-domestic-country table: quarter index by partner export values."""
    rows: dict[str, dict[tuple[int, str], float]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != EXPORT_HEADER:
            raise DataError(f"{path}: header != {','.join(EXPORT_HEADER)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields")
            try:
                q = parse_quarter(row[2])
                val = float(row[3])
            except (ValueError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            key = (q, row[1].strip())
            dom = rows.setdefault(row[0].strip(), {})
            if key in dom:
                raise DataError(f"{path}:{lineno}: duplicate (quarter, partner)")
            dom[key] = val
    out = {}
    for dom, cells in rows.items():
        ser = pd.Series(cells)
        out[dom] = ser.unstack(level=1).sort_index()
    return out


def write_instrument(path: str, instruments: dict[str, InstrumentSeries]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(INSTRUMENT_HEADER) + "\n")
        for country in sorted(instruments):
            inst = instruments[country]
            for q, val in inst.series.sort_index().items():
                fh.write(f"{country},{format_quarter(int(q))},{float(val)!r}\n")


def read_instrument(path: str) -> dict[str, pd.Series]:
    data: dict[str, dict[int, float]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != INSTRUMENT_HEADER:
            raise DataError(f"{path}: header != {','.join(INSTRUMENT_HEADER)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields")
            try:
                q = parse_quarter(row[1])
                val = float(row[2])
            except (ValueError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            data.setdefault(row[0].strip(), {})[q] = val
    return {c: pd.Series(d).sort_index() for c, d in data.items()}
