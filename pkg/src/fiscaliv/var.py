"""Reduced-form VAR estimation on single countries and pooled panels.

The pooled estimator imposes common lag matrices across countries and
absorbs country fixed effects by within-demeaning (numerically identical to
the dummy-variable regression).  Exogenous variables enter contemporaneously
and with the same lag depth as the endogenous block.  Estimation is
equation-by-equation least squares in levels; no detrending unless asked.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .dataio import ModelDataset
from .errors import DegenerateError, DesignError
from .regress import _check_full_rank, within_demean


@dataclass(frozen=True)
class VarSpec:
    """Shape of the reduced-form model."""

    endogenous: tuple[str, ...]
    lags: int
    exogenous: tuple[str, ...] = ()
    fixed_effects: bool = False
    constant: bool = True
    detrend: bool = False

    def __post_init__(self) -> None:
        if self.lags < 1:
            raise ValueError(f"lag length {self.lags} < 1")
        if not self.endogenous:
            raise ValueError("no endogenous variables")
        overlap = set(self.endogenous) & set(self.exogenous)
        if overlap:
            raise ValueError(f"variables both endogenous and exogenous: {overlap}")
        if self.fixed_effects and not self.constant:
            raise ValueError("fixed effects imply per-country constants")

    def with_lags(self, p: int) -> "VarSpec":
        return replace(self, lags=p)


@dataclass
class VarEstimate:
    """Fitted reduced form, with the raw stacked design kept for reuse by the
    structural step (which runs level regressions with the same controls)."""

    spec: VarSpec
    countries: list[str]
    coef_lags: np.ndarray          # (p, n, n): row=equation, col=lagged var
    coef_exog: np.ndarray | None   # (p+1, n, n_x) for exog lags 0..p
    intercepts: dict[str, np.ndarray]
    trends: dict[str, np.ndarray] = field(default_factory=dict)
    residuals: np.ndarray = None   # (N, n) stacked
    levels: np.ndarray = None      # (N, n) y_t in levels, same rows
    design: np.ndarray = None      # (N, k) lag+exog regressors, no deterministics
    design_names: list[str] = field(default_factory=list)
    row_country: np.ndarray = None
    row_qidx: np.ndarray = None
    sigma_u: np.ndarray = None
    dof_per_eq: int = 0
    nobs: dict[str, int] = field(default_factory=dict)

    @property
    def n_endog(self) -> int:
        return len(self.spec.endogenous)

    @property
    def t_eff(self) -> int:
        return int(self.residuals.shape[0])

    def var_index(self, name: str) -> int:
        try:
            return self.spec.endogenous.index(name)
        except ValueError:
            raise DesignError(f"{name!r} is not an endogenous variable") from None

    def residuals_by_country(self) -> dict[str, np.ndarray]:
        return {
            c: self.residuals[self.row_country == c] for c in self.countries
        }

    def to_json(self) -> dict:
        return {
            "endogenous": list(self.spec.endogenous),
            "exogenous": list(self.spec.exogenous),
            "lags": self.spec.lags,
            "fixed_effects": self.spec.fixed_effects,
            "constant": self.spec.constant,
            "detrend": self.spec.detrend,
            "countries": self.countries,
            "coef_lags": self.coef_lags.tolist(),
            "coef_exog": None if self.coef_exog is None else self.coef_exog.tolist(),
            "intercepts": {c: v.tolist() for c, v in self.intercepts.items()},
            "trends": {c: v.tolist() for c, v in self.trends.items()},
            "sigma_u": self.sigma_u.tolist(),
            "dof_per_eq": self.dof_per_eq,
            "nobs": dict(self.nobs),
        }


def _lag_block(y: np.ndarray, p: int, names: list[str]) -> tuple[np.ndarray, list[str]]:
    """Rows t=p..T-1 of [y_{t-1}, ..., y_{t-p}] stacked column blocks."""
    T = y.shape[0]
    cols = [y[p - j : T - j] for j in range(1, p + 1)]
    labels = [f"{v}.L{j}" for j in range(1, p + 1) for v in names]
    return np.hstack(cols), labels


def _exog_block(x: np.ndarray, p: int, names: list[str]) -> tuple[np.ndarray, list[str]]:
    """Rows t=p..T-1 of [x_t, x_{t-1}, ..., x_{t-p}]."""
    T = x.shape[0]
    cols = [x[p - j : T - j] for j in range(0, p + 1)]
    labels = [f"{v}.L{j}" for j in range(0, p + 1) for v in names]
    return np.hstack(cols), labels


def _country_blocks(data: ModelDataset, spec: VarSpec):
    """Per-country (levels, design, qidx) over the effective sample."""
    p = spec.lags
    endo_ix = [data.column(v) for v in spec.endogenous]
    exog_ix = [data.column(v) for v in spec.exogenous]
    n_x = len(exog_ix)
    blocks = {}
    names: list[str] | None = None
    for country in data.countries:
        mat = data.data[country]
        T = mat.shape[0]
        # minimum sample: p presample rows, one row per parameter, one spare
        if T < p + 1 + len(endo_ix) * p + n_x * (p + 1) + 1:
            raise DesignError(
                f"{country}: {T} observations too few for p={p}, "
                f"n={len(endo_ix)}, n_exog={n_x}"
            )
        y = mat[:, endo_ix]
        X, labels = _lag_block(y, p, list(spec.endogenous))
        if n_x:
            Xx, xl = _exog_block(mat[:, exog_ix], p, list(spec.exogenous))
            X = np.hstack([X, Xx])
            labels += xl
        blocks[country] = (y[p:], X, data.quarters[country][p:])
        if names is None:
            names = labels
    return blocks, names


def fit_var(data: ModelDataset, spec: VarSpec) -> VarEstimate:
    """Equation-by-equation least squares of the reduced form.

    Pooled with fixed effects: all countries' rows are demeaned within
    country (y and regressors alike) and the lag/exogenous coefficients are
    common; intercepts are recovered from country means.  Without fixed
    effects a single constant is shared.  Residual covariance pools the
    stacked residuals with a per-equation dof correction.
    """
    p = spec.lags
    n = len(spec.endogenous)
    blocks, names = _country_blocks(data, spec)
    countries = sorted(blocks)
    pooled = len(countries) > 1
    if pooled and not spec.fixed_effects and not spec.constant:
        raise DesignError("pooled fit requires a constant or fixed effects")

    Y = np.vstack([blocks[c][0] for c in countries])
    X = np.vstack([blocks[c][1] for c in countries])
    qidx = np.concatenate([blocks[c][2] for c in countries])
    row_country = np.concatenate(
        [np.full(blocks[c][0].shape[0], c) for c in countries]
    )
    design_names = list(names)
    if spec.detrend:
        # per-country centered time index, zero outside the country's rows
        trend_cols = []
        for c in countries:
            col = np.where(row_country == c, qidx.astype(float), 0.0)
            trend_cols.append(col)
        Xd = np.column_stack(trend_cols)
        X_fit = np.hstack([X, Xd])
        design_names_fit = design_names + [f"trend[{c}]" for c in countries]
    else:
        X_fit = X
        design_names_fit = list(design_names)

    # absorb deterministics by demeaning when there is one intercept per
    # country (single-country constant, or pooled fixed effects)
    demean = spec.fixed_effects or (not pooled and spec.constant)

    if demean:
        Yd, y_means = within_demean(Y, row_country)
        Xdm, x_means = within_demean(X_fit, row_country)
        _check_full_rank(Xdm, design_names_fit)
        beta, _, _, _ = np.linalg.lstsq(Xdm, Yd, rcond=None)
        U = Yd - Xdm @ beta
        n_det = len(countries)
    elif spec.constant:
        Xc = np.hstack([X_fit, np.ones((X_fit.shape[0], 1))])
        _check_full_rank(Xc, design_names_fit + ["const"])
        beta_c, _, _, _ = np.linalg.lstsq(Xc, Y, rcond=None)
        beta = beta_c[:-1]
        U = Y - Xc @ beta_c
        n_det = 1
    else:
        _check_full_rank(X_fit, design_names_fit)
        beta, _, _, _ = np.linalg.lstsq(X_fit, Y, rcond=None)
        U = Y - X_fit @ beta
        n_det = 0

    # unpack common coefficients; beta is (k, n) with row=regressor
    coef = beta.T  # (n, k): row=equation
    A = np.empty((p, n, n))
    for j in range(p):
        A[j] = coef[:, j * n : (j + 1) * n]
    n_x = len(spec.exogenous)
    offset = p * n
    if n_x:
        B = np.empty((p + 1, n, n_x))
        for j in range(p + 1):
            B[j] = coef[:, offset + j * n_x : offset + (j + 1) * n_x]
        offset += (p + 1) * n_x
    else:
        B = None
    trends: dict[str, np.ndarray] = {}
    if spec.detrend:
        for i, c in enumerate(countries):
            trends[c] = coef[:, offset + i]

    intercepts: dict[str, np.ndarray] = {}
    if demean:
        for c in countries:
            xm = x_means[c]
            ci = y_means[c] - coef @ xm
            intercepts[c] = ci
    elif spec.constant:
        const = beta_c[-1]
        for c in countries:
            intercepts[c] = const.copy()
    else:
        for c in countries:
            intercepts[c] = np.zeros(n)

    dof = X_fit.shape[1] + n_det
    t_total = U.shape[0]
    if t_total <= dof:
        raise DesignError(f"{t_total} stacked observations <= {dof} parameters")
    sigma = (U.T @ U) / (t_total - dof)

    return VarEstimate(
        spec=spec,
        countries=countries,
        coef_lags=A,
        coef_exog=B,
        intercepts=intercepts,
        trends=trends,
        residuals=U,
        levels=Y,
        design=X_fit,
        design_names=design_names_fit,
        row_country=row_country,
        row_qidx=qidx,
        sigma_u=0.5 * (sigma + sigma.T),
        dof_per_eq=dof,
        nobs={c: int(blocks[c][0].shape[0]) for c in countries},
    )


@dataclass
class LagSelection:
    """Information criteria and residual-autocorrelation summary per lag."""

    table: pd.DataFrame  # index p, columns aic, bic, hq, max_abs_resid_acf

    def best(self, criterion: str = "aic") -> int:
        if criterion not in ("aic", "bic", "hq"):
            raise ValueError(f"unknown criterion {criterion!r}")
        return int(self.table[criterion].idxmin())


def select_lags(data: ModelDataset, spec: VarSpec, p_max: int,
                acf_lags: int = 8) -> LagSelection:
    """Fit p = 1..p_max on the common sample (all fits drop p_max presample
    rows) and tabulate AIC/BIC/HQ plus the largest absolute residual
    autocorrelation over lags 1..acf_lags across equations."""
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    n = len(spec.endogenous)
    for country in data.countries:
        T = data.data[country].shape[0]
        if T // (n + 1) < p_max or T < 2 * p_max + 2:
            raise DesignError(
                f"{country}: p_max={p_max} infeasible for T={T}, n={n}"
            )
    records = []
    for p in range(1, p_max + 1):
        # drop the first p_max - p rows so every p sees the same sample
        cut = p_max - p
        sub = ModelDataset(
            variables=data.variables,
            data={c: v[cut:] for c, v in data.data.items()},
            quarters={c: q[cut:] for c, q in data.quarters.items()},
            shares=data.shares,
        )
        est = fit_var(sub, VarSpec(
            endogenous=spec.endogenous,
            lags=p,
            exogenous=spec.exogenous,
            fixed_effects=spec.fixed_effects,
            constant=spec.constant,
            detrend=spec.detrend,
        ))
        U = est.residuals
        t_eff = U.shape[0]
        sigma_ml = (U.T @ U) / t_eff
        sign, logdet = np.linalg.slogdet(sigma_ml)
        if sign <= 0:
            raise DesignError(f"p={p}: residual covariance not positive definite")
        n_par = n * est.dof_per_eq
        acf = residual_autocorr(est, acf_lags)
        records.append(
            {
                "p": p,
                "aic": logdet + 2.0 * n_par / t_eff,
                "bic": logdet + n_par * np.log(t_eff) / t_eff,
                "hq": logdet + 2.0 * n_par * np.log(np.log(t_eff)) / t_eff,
                "max_abs_resid_acf": float(np.max(np.abs(acf.acf))),
            }
        )
    table = pd.DataFrame.from_records(records).set_index("p")
    return LagSelection(table=table)


@dataclass
class CompanionForm:
    matrix: np.ndarray
    n: int
    p: int
    spectral_radius: float

    def powers(self, H: int) -> np.ndarray:
        """Top-left n x n blocks of matrix^h for h = 0..H."""
        np_dim = self.matrix.shape[0]
        out = np.empty((H + 1, self.n, self.n))
        acc = np.eye(np_dim)
        out[0] = acc[: self.n, : self.n]
        for h in range(1, H + 1):
            acc = self.matrix @ acc
            out[h] = acc[: self.n, : self.n]
        return out


def companion_from_coefs(coef_lags: np.ndarray) -> CompanionForm:
    """Stack [A_1 ... A_p] over identity sub-diagonal blocks."""
    coef_lags = np.asarray(coef_lags, dtype=float)
    p, n, _ = coef_lags.shape
    C = np.zeros((n * p, n * p))
    for j in range(p):
        C[:n, j * n : (j + 1) * n] = coef_lags[j]
    if p > 1:
        C[n:, : n * (p - 1)] = np.eye(n * (p - 1))
    radius = float(np.max(np.abs(np.linalg.eigvals(C)))) if C.size else 0.0
    return CompanionForm(matrix=C, n=n, p=p, spectral_radius=radius)


def companion(est: VarEstimate) -> CompanionForm:
    return companion_from_coefs(est.coef_lags)


@dataclass
class AutocorrTable:
    """Pooled residual autocorrelations: (max_lag, n) acf and pacf arrays."""

    acf: np.ndarray
    pacf: np.ndarray
    band: float
    equations: list[str]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for j in range(self.acf.shape[0]):
            for i, eq in enumerate(self.equations):
                rows.append(
                    {
                        "lag": j + 1,
                        "equation": eq,
                        "acf": self.acf[j, i],
                        "pacf": self.pacf[j, i],
                        "band": self.band,
                    }
                )
        return pd.DataFrame(rows)


def _pacf_from_acf(rho: np.ndarray) -> np.ndarray:
    """Durbin-Levinson partial autocorrelations from rho(1..K)."""
    K = rho.shape[0]
    pacf = np.empty(K)
    phi_prev = np.empty(0)
    for k in range(1, K + 1):
        if k == 1:
            phi_kk = rho[0]
            phi = np.array([phi_kk])
        else:
            num = rho[k - 1] - phi_prev @ rho[k - 2 :: -1][: k - 1]
            den = 1.0 - phi_prev @ rho[: k - 1]
            if den == 0.0:
                raise DegenerateError("Durbin-Levinson recursion degenerate")
            phi_kk = num / den
            phi = np.concatenate([phi_prev - phi_kk * phi_prev[::-1], [phi_kk]])
        pacf[k - 1] = phi_kk
        phi_prev = phi
    return pacf


def residual_autocorr(est: VarEstimate, max_lag: int) -> AutocorrTable:
    """Residual ACF/PACF per equation, pooled across countries.

    Autocovariances are computed within each country's run (no products span
    a country boundary) and summed before normalizing, so the pooled rho has
    a single T in the denominator.  The reference band is 2/sqrt(T_total).
    """
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    by_country = est.residuals_by_country()
    t_min = min(u.shape[0] for u in by_country.values())
    if max_lag >= t_min:
        raise DesignError(f"max_lag {max_lag} >= shortest sample {t_min}")
    n = est.n_endog
    t_total = est.t_eff
    gamma = np.zeros((max_lag + 1, n))
    for u in by_country.values():
        uc = u - u.mean(axis=0, keepdims=True)
        for j in range(max_lag + 1):
            if uc.shape[0] > j:
                gamma[j] += np.sum(uc[j:] * uc[: uc.shape[0] - j], axis=0)
    gamma /= t_total
    if np.any(gamma[0] <= 0.0):
        bad = est.spec.endogenous[int(np.argmax(gamma[0] <= 0.0))]
        raise DegenerateError(f"zero-variance residuals in equation {bad!r}")
    rho = gamma[1:] / gamma[0]
    pacf = np.column_stack([_pacf_from_acf(rho[:, i]) for i in range(n)])
    return AutocorrTable(
        acf=rho,
        pacf=pacf,
        band=2.0 / np.sqrt(t_total),
        equations=list(est.spec.endogenous),
    )
