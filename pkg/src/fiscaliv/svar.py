"""Structural identification of fiscal shocks and everything downstream.

Two schemes share one mechanic.  The spending step either imposes a zero
contemporaneous output elasticity of spending (restriction scheme) or
estimates it by 2SLS with the external instrument (proxy scheme); the
revenue step then estimates the output elasticity of revenue and the direct
response of revenue to the spending shock.  Both steps run as level
regressions with the full set of reduced-form lag controls; a
Frisch-Waugh cross-check against the residual-on-residual form guards the
plumbing whenever the instrument covers the whole estimation sample.

Impact vectors come from the partial-identification moment
h = sum_t u_t e_t / sum_t e_t^2; impulse responses are companion powers
applied to h, converted to percent-of-GDP units and normalized to a unit
own response on impact.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .errors import (
    AlignmentError,
    DegenerateError,
    DesignError,
    IdentificationError,
    StabilityError,
)
from .instrument import InstrumentSeries
from .regress import CovSpec, tsls, within_demean
from .var import VarEstimate, companion, companion_from_coefs

FWL_TOL = 1e-8
DENOM_TOL = 1e-12


@dataclass
class PolicyRule:
    """Contemporaneous fiscal-rule coefficients and their diagnostics."""

    scheme: str                      # "bp" | "ck"
    a_g: float
    a_r: float | None = None
    b_gr: float | None = None
    se: dict | None = None
    effective_f: dict | None = None
    nobs: dict | None = None

    def __post_init__(self) -> None:
        if self.scheme not in ("bp", "ck"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "bp" and self.a_g != 0.0:
            raise ValueError("restriction scheme requires a_g = 0")
        self.se = dict(self.se or {})
        self.effective_f = dict(self.effective_f or {})
        self.nobs = dict(self.nobs or {})

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "a_g": self.a_g,
            "a_r": self.a_r,
            "b_gr": self.b_gr,
            "se": self.se,
            "effective_f": self.effective_f,
            "nobs": self.nobs,
        }


@dataclass
class ShockSeries:
    """Structural fiscal shocks on the reduced-form residual rows."""

    e_g: np.ndarray
    e_r: np.ndarray | None
    row_country: np.ndarray
    row_qidx: np.ndarray


@dataclass
class ImpactVector:
    """Contemporaneous response of every variable to one unit of a shock."""

    values: np.ndarray
    shock: str

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise IdentificationError("non-finite impact vector")


def _instrument_vector(est: VarEstimate, m) -> np.ndarray:
    """Instrument values aligned to the stacked residual rows (NaN = absent)."""
    if isinstance(m, InstrumentSeries):
        mapping = {m.country: m.series}
    elif isinstance(m, pd.Series):
        if len(est.countries) != 1:
            raise AlignmentError("bare series is ambiguous for a multi-country fit")
        mapping = {est.countries[0]: m}
    elif isinstance(m, dict):
        mapping = {
            c: (v.series if isinstance(v, InstrumentSeries) else v)
            for c, v in m.items()
        }
    else:
        raise TypeError(f"unsupported instrument type {type(m).__name__}")
    vec = np.full(est.t_eff, np.nan)
    for country, series in mapping.items():
        rows = est.row_country == country
        if not rows.any():
            continue
        qid = est.row_qidx[rows]
        vec[rows] = series.reindex(qid).to_numpy(dtype=float)
    if not np.isfinite(vec).any():
        raise AlignmentError("instrument shares no rows with the residuals")
    return vec


def _cov_for_rows(cov, nw_lags: int, country: np.ndarray,
                  qidx: np.ndarray) -> CovSpec:
    """Materialize a covariance spec with row labels for the masked sample."""
    if isinstance(cov, CovSpec):
        if cov.kind == "newey_west" and cov.groups is None and len(set(country)) > 1:
            return replace(cov, groups=country)
        return cov
    if cov == "hc0":
        return CovSpec.hc0()
    if cov == "classical":
        return CovSpec.classical()
    if cov == "newey_west":
        groups = country if len(set(country)) > 1 else None
        return CovSpec.newey_west(nw_lags, groups=groups)
    if cov == "two_way_cluster":
        return CovSpec.two_way_cluster(country, qidx)
    raise ValueError(f"unknown covariance {cov!r}")


def _structural_design(est: VarEstimate, mask: np.ndarray,
                       extra_cols: list[np.ndarray]):
    """Dependent/endogenous/control/label blocks for a structural level
    regression on the masked rows, with deterministics handled the same way
    as the reduced-form fit (demeaning or an appended constant)."""
    country = est.row_country[mask]
    qidx = est.row_qidx[mask]
    controls = est.design[mask]
    extras = [np.asarray(c, dtype=float)[mask] for c in extra_cols]
    demean = est.spec.fixed_effects or len(est.countries) == 1
    if not est.spec.constant:
        demean = False
    return country, qidx, controls, extras, demean


def _run_structural(est: VarEstimate, dep_ix: int, endog_ix: int,
                    m_vec: np.ndarray, extra_cols: list[np.ndarray],
                    cov, nw_lags: int):
    """Level 2SLS of one equation on instrumented gdp plus controls.

    Returns (result, mask, first-stage effective F).  ``extra_cols`` are
    included exogenous regressors placed before the lag controls (the
    revenue step passes the spending shock here).
    """
    mask = np.isfinite(m_vec)
    country, qidx, controls, extras, demean = _structural_design(
        est, mask, extra_cols
    )
    y = est.levels[mask, dep_ix]
    x_end = est.levels[mask, endog_ix]
    z = m_vec[mask]
    exog_parts = extras + [controls]
    extra_dof = 0
    if demean:
        y, _ = within_demean(y, country)
        x_end, _ = within_demean(x_end, country)
        z, _ = within_demean(z, country)
        exog_parts = [within_demean(b, country)[0] for b in exog_parts]
        extra_dof = len(np.unique(country))
        X_exog = np.column_stack(exog_parts) if exog_parts else None
    else:
        cols = exog_parts + (
            [np.ones((y.shape[0], 1))] if est.spec.constant else []
        )
        X_exog = np.column_stack(cols) if cols else None
    cspec = _cov_for_rows(cov, nw_lags, country, qidx)
    try:
        res = tsls(y, x_end, X_exog, z, cspec, extra_dof=extra_dof)
    except DesignError as exc:
        raise IdentificationError(f"first-stage design failure: {exc}") from exc
    eff_f = None
    if res.first_stage is not None:
        eff_f = res.first_stage.effective_f
    return res, mask, eff_f


def identify_spending(est: VarEstimate, m=None, scheme: str = "ck",
                      cov="hc0", nw_lags: int = 0,
                      a_g_value: float | None = None,
                      check_fwl: bool = True) -> tuple[PolicyRule, ShockSeries]:
    """Spending step: fix or estimate the output elasticity of g.

    Proxy scheme: 2SLS of the g equation (in levels, all lag controls) on
    gdp instrumented by m; the coefficient is a_g.  Restriction scheme sets
    a_g = 0 without touching the instrument.  The spending shock is
    e_g = u_g - a_g * u_gdp on every residual row.
    """
    ig = est.var_index("g")
    iy = est.var_index("gdp")
    u = est.residuals
    se: dict = {}
    eff: dict = {}
    nobs: dict = {}

    if scheme == "bp":
        a_g = 0.0
    elif a_g_value is not None:
        a_g = float(a_g_value)
    elif scheme == "ck":
        if m is None:
            raise IdentificationError("proxy scheme requires an instrument")
        m_vec = _instrument_vector(est, m)
        res, mask, eff_f = _run_structural(est, ig, iy, m_vec, [], cov, nw_lags)
        a_g = float(res.params[0])
        se["a_g"] = float(res.se[0])
        if eff_f is not None:
            eff["a_g"] = float(eff_f)
        nobs["a_g"] = res.nobs
        if check_fwl and bool(mask.all()):
            num = float(m_vec @ u[:, ig])
            den = float(m_vec @ u[:, iy])
            if den == 0.0:
                raise IdentificationError("instrument orthogonal to gdp residuals")
            direct = num / den
            if abs(direct - a_g) > FWL_TOL * max(1.0, abs(a_g)):
                raise IdentificationError(
                    f"level and residual 2SLS disagree: {a_g} vs {direct}"
                )
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    e_g = u[:, ig] - a_g * u[:, iy]
    rule = PolicyRule(scheme=scheme, a_g=a_g, se=se, effective_f=eff, nobs=nobs)
    shocks = ShockSeries(
        e_g=e_g,
        e_r=None,
        row_country=est.row_country,
        row_qidx=est.row_qidx,
    )
    return rule, shocks


def identify_revenue(est: VarEstimate, m, rule: PolicyRule,
                     shocks: ShockSeries, cov="hc0", nw_lags: int = 0,
                     check_fwl: bool = True) -> tuple[PolicyRule, ShockSeries]:
    """Revenue step: 2SLS of the r equation on instrumented gdp with the
    spending shock included, taking a_g from the spending step as given.

    Updates the rule with (a_r, b_gr) and the shock set with
    e_r = u_r - a_r * u_gdp - b_gr * e_g.
    """
    ir = est.var_index("r")
    iy = est.var_index("gdp")
    u = est.residuals
    if m is None:
        raise IdentificationError("revenue step requires an instrument")
    m_vec = _instrument_vector(est, m)
    res, mask, eff_f = _run_structural(
        est, ir, iy, m_vec, [shocks.e_g], cov, nw_lags
    )
    a_r = float(res.params[0])
    b_gr = float(res.params[1])
    if check_fwl and bool(mask.all()):
        direct = _residual_revenue(u[:, ir], u[:, iy], shocks.e_g, m_vec)
        if (abs(direct[0] - a_r) > FWL_TOL * max(1.0, abs(a_r))
                or abs(direct[1] - b_gr) > FWL_TOL * max(1.0, abs(b_gr))):
            raise IdentificationError(
                f"level and residual 2SLS disagree: ({a_r}, {b_gr}) vs {direct}"
            )
    se = dict(rule.se)
    eff = dict(rule.effective_f)
    nobs = dict(rule.nobs)
    se["a_r"] = float(res.se[0])
    se["b_gr"] = float(res.se[1])
    if eff_f is not None:
        eff["a_r"] = float(eff_f)
    nobs["a_r"] = res.nobs
    out_rule = PolicyRule(
        scheme=rule.scheme,
        a_g=rule.a_g,
        a_r=a_r,
        b_gr=b_gr,
        se=se,
        effective_f=eff,
        nobs=nobs,
    )
    e_r = u[:, ir] - a_r * u[:, iy] - b_gr * shocks.e_g
    out_shocks = ShockSeries(
        e_g=shocks.e_g,
        e_r=e_r,
        row_country=shocks.row_country,
        row_qidx=shocks.row_qidx,
    )
    return out_rule, out_shocks


def _residual_revenue(u_r: np.ndarray, u_y: np.ndarray, e_g: np.ndarray,
                      m: np.ndarray) -> tuple[float, float]:
    """Residual-form 2SLS for the revenue step: instruments [m, e_g] for
    regressors [u_y, e_g]; closed form via the 2x2 moment system."""
    zz = np.array([[m @ u_y, m @ e_g], [e_g @ u_y, e_g @ e_g]])
    zy = np.array([m @ u_r, e_g @ u_r])
    try:
        sol = np.linalg.solve(zz, zy)
    except np.linalg.LinAlgError as exc:
        raise IdentificationError("residual-form moment system singular") from exc
    return float(sol[0]), float(sol[1])


def structural_impact(est: VarEstimate, shock: np.ndarray,
                      label: str) -> ImpactVector:
    """Impact column h = sum_t u_t e_t / sum_t e_t^2 (one unit of e)."""
    e = np.asarray(shock, dtype=float).ravel()
    if e.shape[0] != est.t_eff:
        raise AlignmentError("shock series does not match residual rows")
    denom = float(e @ e)
    if denom <= 0.0 or np.var(e) == 0.0:
        raise DegenerateError("zero-variance structural shock")
    h = (est.residuals.T @ e) / denom
    return ImpactVector(values=h, shock=label)


_UNIT_DEFAULT = 100.0


def _unit_scale(name: str, shares: dict) -> float:
    """Multiplier taking a raw (log or share) response into % of GDP;
    interest rates stay in points."""
    if name == "g":
        return _UNIT_DEFAULT * shares["s_g"]
    if name == "r":
        return _UNIT_DEFAULT * shares["s_r"]
    if name == "srate":
        return 1.0
    return _UNIT_DEFAULT


@dataclass
class IrfSet:
    """Normalized impulse responses; ``bal`` is the derived budget-balance
    row (revenue minus spending, both in % of GDP)."""

    shock: str
    variables: list[str]
    values: np.ndarray  # (H+1, len(variables))
    shares: dict
    scale: float

    def response(self, variable: str) -> np.ndarray:
        try:
            j = self.variables.index(variable)
        except ValueError:
            raise KeyError(variable) from None
        return self.values[:, j]

    @property
    def horizons(self) -> np.ndarray:
        return np.arange(self.values.shape[0])

    def to_frame(self, lo: np.ndarray | None = None,
                 hi: np.ndarray | None = None) -> pd.DataFrame:
        rows = []
        for j, var in enumerate(self.variables):
            for h in range(self.values.shape[0]):
                row = {
                    "shock": self.shock,
                    "variable": var,
                    "horizon": h,
                    "value": self.values[h, j],
                }
                row["lo"] = lo[h, j] if lo is not None else np.nan
                row["hi"] = hi[h, j] if hi is not None else np.nan
                rows.append(row)
        return pd.DataFrame(rows)


def propagate_responses(coef_lags: np.ndarray, impact: np.ndarray,
                        H: int) -> np.ndarray:
    """Raw responses (H+1, n): companion powers applied to an impact vector."""
    if H < 0:
        raise ValueError("horizon must be >= 0")
    comp = companion_from_coefs(coef_lags)
    return comp.powers(H) @ np.asarray(impact, dtype=float)


def convert_and_normalize(raw: np.ndarray, names: list[str], shares: dict,
                          target: str) -> tuple[np.ndarray, list[str], float]:
    """%-of-GDP conversion plus unit-own-impact normalization.

    Returns (values with the derived budget-balance column, variable names,
    normalization factor applied).
    """
    scales = np.array([_unit_scale(v, shares) for v in names])
    scaled = raw * scales[None, :]
    if target == "g":
        own = scaled[0, names.index("g")]
        want = 1.0
    elif target == "r":
        own = scaled[0, names.index("r")]
        want = -1.0
    else:
        raise ValueError(f"unknown normalization target {target!r}")
    if own == 0.0 or not np.isfinite(own):
        raise DegenerateError("zero impact response of the shocked variable")
    c = want / own
    values = scaled * c
    variables = list(names)
    if "g" in names and "r" in names:
        bal = values[:, names.index("r")] - values[:, names.index("g")]
        values = np.column_stack([values, bal])
        variables.append("bal")
    return values, variables, float(c)


def compute_irf(est: VarEstimate, impact: ImpactVector, H: int,
                shares: dict, target: str = "g",
                allow_unstable: bool = False) -> IrfSet:
    """Impulse responses over h = 0..H in % of GDP.

    Raw log responses are companion powers times the impact vector; units
    are converted per variable (output and log variables x100, spending and
    revenue additionally by their GDP shares, shares x100, rates as-is) and
    the whole set rescaled so the shocked fiscal variable moves +1 (g) or
    -1 (r) percent of GDP on impact.
    """
    if isinstance(shares, (tuple, list)):
        shares = {"s_g": float(shares[0]), "s_r": float(shares[1])}
    comp = companion(est)
    if comp.spectral_radius >= 1.0 and not allow_unstable:
        raise StabilityError(
            f"companion spectral radius {comp.spectral_radius:.6f} >= 1"
        )
    raw = propagate_responses(est.coef_lags, impact.values, H)
    names = list(est.spec.endogenous)
    values, variables, c = convert_and_normalize(raw, names, shares, target)
    return IrfSet(
        shock=impact.shock,
        variables=variables,
        values=values,
        shares=dict(shares),
        scale=c,
    )


@dataclass
class MultiplierPath:
    """Cumulative multipliers; undefined horizons carry NaN."""

    values: np.ndarray
    undefined: np.ndarray

    def to_frame(self, lo: np.ndarray | None = None,
                 hi: np.ndarray | None = None) -> pd.DataFrame:
        rows = []
        for h, v in enumerate(self.values):
            rows.append(
                {
                    "horizon": h,
                    "multiplier": v,
                    "undefined": bool(self.undefined[h]),
                    "lo": lo[h] if lo is not None else np.nan,
                    "hi": hi[h] if hi is not None else np.nan,
                }
            )
        return pd.DataFrame(rows)


def cumulative_multiplier(irf: IrfSet, H_max: int | None = None) -> MultiplierPath:
    """M_H = cumulative gdp response / cumulative g response up to H."""
    gdp = irf.response("gdp")
    g = irf.response("g")
    if H_max is None:
        H_max = gdp.shape[0] - 1
    if H_max >= gdp.shape[0]:
        raise ValueError(f"H_max {H_max} exceeds computed horizon")
    num = np.cumsum(gdp[: H_max + 1])
    den = np.cumsum(g[: H_max + 1])
    undefined = np.abs(den) <= DENOM_TOL
    values = np.where(undefined, np.nan, num / np.where(undefined, np.nan, den))
    return MultiplierPath(values=values, undefined=undefined)


@dataclass
class ElasticityCurve:
    """Impact multiplier as a function of the imposed output elasticity."""

    grid: np.ndarray
    values: np.ndarray
    undefined: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "a_g": self.grid,
                "impact_multiplier": self.values,
                "undefined": self.undefined,
            }
        )


def elasticity_sweep(est: VarEstimate, grid, shares: dict) -> ElasticityCurve:
    """Impact multiplier h_gdp / (h_g * s_g) for each imposed a_g value."""
    if isinstance(shares, (tuple, list)):
        shares = {"s_g": float(shares[0]), "s_r": float(shares[1])}
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or not np.all(np.isfinite(grid)):
        raise ValueError("grid must be a finite 1-D array")
    ig = est.var_index("g")
    iy = est.var_index("gdp")
    u = est.residuals
    values = np.full(grid.shape, np.nan)
    undefined = np.zeros(grid.shape, dtype=bool)
    for i, a in enumerate(grid):
        e = u[:, ig] - a * u[:, iy]
        ee = float(e @ e)
        if ee <= 0.0:
            undefined[i] = True
            continue
        h = (u.T @ e) / ee
        num = h[iy]
        den = h[ig] * shares["s_g"]
        if abs(den) <= DENOM_TOL * max(1.0, abs(num)):
            undefined[i] = True
            continue
        values[i] = num / den
    return ElasticityCurve(grid=grid, values=values, undefined=undefined)
