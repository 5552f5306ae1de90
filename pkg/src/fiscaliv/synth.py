"""Synthetic data-generating process with known structural truth.

The reduced-form residuals are an exact mixing of three structural shocks
(spending, revenue, non-policy output):

    u_gdp = e_y + phi_g*e_g + phi_r*e_r
    u_g   = a_g*u_gdp + e_g
    u_r   = a_r*u_gdp + b_gr*e_g + e_r

so the true fiscal rule (a_g, a_r, b_gr) and the true impact vectors (the
mixing-matrix columns) are known in closed form.  The instrument follows
m = gamma*e_y + nu: correlated with the non-policy shock, independent of
the policy shocks by construction.  The default parameter set keeps the
population effective first-stage F near 20 at T=2000.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dataio import ModelDataset, SeriesSpec, format_quarter
from .errors import DegenerateError, StabilityError
from .instrument import InstrumentSeries, write_instrument
from .svar import (
    IrfSet,
    MultiplierPath,
    convert_and_normalize,
    cumulative_multiplier,
    propagate_responses,
)
from .var import companion_from_coefs

VARIABLES = ("g", "r", "gdp")
_BASE_QUARTER = 1990 * 4  # arbitrary fixed calendar origin


def _default_lags() -> np.ndarray:
    return np.array(
        [[[0.50, 0.00, 0.10],
          [0.00, 0.40, 0.10],
          [0.10, 0.05, 0.60]]]
    )


@dataclass(frozen=True)
class DgpSpec:
    """True parameters of the synthetic economy (variables g, r, gdp)."""

    coef_lags: np.ndarray = field(default_factory=_default_lags)
    a_g: float = -0.4
    a_r: float = 1.5
    b_gr: float = -0.5
    phi_g: float = 0.3
    phi_r: float = -0.2
    sigma: tuple[float, float, float] = (1.0, 1.0, 1.0)  # e_g, e_r, e_y scales
    gamma: float = 1.0
    nu_scale: float = 9.3539
    s_g: float = 0.20
    s_r: float = 0.18
    countries: int = 1
    T: int = 2000
    burn_in: int = 200
    seed: int = 0
    dist: str = "gaussian"
    t_dof: float = 5.0
    intercept_scale: float = 0.0
    include_forecast_errors: bool = False

    def __post_init__(self) -> None:
        A = np.asarray(self.coef_lags, dtype=float)
        if A.ndim != 3 or A.shape[1:] != (3, 3):
            raise ValueError(f"lag matrices must be (p, 3, 3), got {A.shape}")
        object.__setattr__(self, "coef_lags", A)
        if not np.isfinite(self.gamma):
            raise ValueError("gamma must be finite")
        if self.dist not in ("gaussian", "student_t"):
            raise ValueError(f"unknown shock distribution {self.dist!r}")
        if self.dist == "student_t" and self.t_dof <= 2.0:
            raise ValueError("student_t needs dof > 2 for finite variance")
        if min(self.sigma) < 0.0 or self.nu_scale < 0.0:
            raise ValueError("shock scales must be nonnegative")
        if self.countries < 1 or self.T < 10 or self.burn_in < 0:
            raise ValueError("bad panel dimensions")
        if not 0.0 < self.s_g < 1.0 or not 0.0 < self.s_r < 1.0:
            raise ValueError("shares must lie in (0, 1)")

    @property
    def p(self) -> int:
        return self.coef_lags.shape[0]

    def mixing_matrix(self) -> np.ndarray:
        """Columns = impact of one unit of (e_g, e_r, e_y) on (u_g, u_r, u_gdp)."""
        a_g, a_r, b = self.a_g, self.a_r, self.b_gr
        pg, pr = self.phi_g, self.phi_r
        return np.array(
            [
                [1.0 + a_g * pg, a_g * pr, a_g],
                [a_r * pg + b, a_r * pr + 1.0, a_r],
                [pg, pr, 1.0],
            ]
        )

    def true_sigma_u(self) -> np.ndarray:
        R = self.mixing_matrix()
        D = np.diag(np.square(self.sigma))
        return R @ D @ R.T

    def shares(self) -> dict[str, float]:
        return {"s_g": self.s_g, "s_r": self.s_r}


@dataclass
class SynthOutput:
    """Simulated panel plus everything an oracle needs."""

    spec: DgpSpec
    dataset: ModelDataset
    instrument: dict[str, pd.Series]
    shocks: dict[str, np.ndarray]       # (T, 3) columns e_g, e_r, e_y
    residuals: dict[str, np.ndarray]    # (T, 3) true reduced-form residuals

    def instrument_series(self) -> dict[str, InstrumentSeries]:
        return {
            c: InstrumentSeries(
                country=c, series=s, partners=("synthetic",), scheme="single"
            )
            for c, s in self.instrument.items()
        }

    def truth(self) -> dict:
        spec = self.spec
        R = spec.mixing_matrix()
        return {
            "a_g": spec.a_g,
            "a_r": spec.a_r,
            "b_gr": spec.b_gr,
            "impact_g": R[:, 0].tolist(),
            "impact_r": R[:, 1].tolist(),
            "coef_lags": spec.coef_lags.tolist(),
            "shares": spec.shares(),
            "sigma_u": spec.true_sigma_u().tolist(),
        }

    def write(self, outdir) -> dict[str, str]:
        """Emit panel/instrument/series-spec/truth files so the CLI pipeline
        can run on this output unchanged."""
        import os

        os.makedirs(outdir, exist_ok=True)
        paths = {
            "panel": os.path.join(outdir, "panel.csv"),
            "instrument": os.path.join(outdir, "instrument.csv"),
            "series_spec": os.path.join(outdir, "series_spec.json"),
            "truth": os.path.join(outdir, "truth.json"),
        }
        self.dataset.write_panel_csv(paths["panel"])
        write_instrument(paths["instrument"], self.instrument_series())
        spec = SeriesSpec.passthrough(
            list(self.dataset.variables),
            shares={c: self.spec.shares() for c in self.dataset.countries},
        )
        with open(paths["series_spec"], "w", encoding="utf-8") as fh:
            json.dump(spec.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(paths["truth"], "w", encoding="utf-8") as fh:
            json.dump(self.truth(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return paths


def _draw_shocks(rng: np.random.Generator, spec: DgpSpec,
                 rows: int) -> tuple[np.ndarray, np.ndarray]:
    """Structural shocks (rows, 3) and instrument noise (rows,), unit-variance
    base draws scaled by the DGP parameters."""
    if spec.dist == "gaussian":
        base = rng.standard_normal((rows, 4))
    else:
        base = rng.standard_t(spec.t_dof, size=(rows, 4))
        base *= np.sqrt((spec.t_dof - 2.0) / spec.t_dof)
    e = base[:, :3] * np.asarray(spec.sigma)[None, :]
    nu = base[:, 3] * spec.nu_scale
    return e, nu


def simulate(spec: DgpSpec) -> SynthOutput:
    """Draw the synthetic panel: shocks -> residuals -> recursive levels.

    Each country gets an independent shock stream spawned from the seed, a
    burn-in of ``spec.burn_in`` periods discarded, and (optionally) its own
    level intercept so fixed-effects estimation has something to absorb.
    """
    radius = companion_from_coefs(spec.coef_lags).spectral_radius
    if radius >= 1.0:
        raise StabilityError(f"true companion radius {radius:.4f} >= 1")
    if max(spec.sigma) == 0.0:
        raise DegenerateError("all structural shock scales are zero")
    R = spec.mixing_matrix()
    p = spec.p
    data: dict[str, np.ndarray] = {}
    quarters: dict[str, np.ndarray] = {}
    shares: dict[str, dict[str, float]] = {}
    instrument: dict[str, pd.Series] = {}
    shocks: dict[str, np.ndarray] = {}
    residuals: dict[str, np.ndarray] = {}
    for ci in range(spec.countries):
        cid = f"C{ci:02d}"
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=spec.seed, spawn_key=(ci,))
        )
        rows = spec.T + spec.burn_in
        e, nu = _draw_shocks(rng, spec, rows)
        if spec.intercept_scale > 0.0:
            intercept = rng.normal(0.0, spec.intercept_scale, size=3)
        else:
            intercept = np.zeros(3)
        u = e @ R.T
        y = np.zeros((rows + p, 3))
        A = spec.coef_lags
        for t in range(rows):
            acc = intercept + u[t]
            for j in range(p):
                acc = acc + A[j] @ y[p + t - 1 - j]
            y[p + t] = acc
        keep = slice(p + spec.burn_in, p + rows)
        if spec.include_forecast_errors:
            # one-step-ahead forecast errors under the true model are the
            # reduced-form residuals; expose the g and gdp ones as data
            data[cid] = np.hstack([y[keep], u[spec.burn_in :, [0, 2]]])
        else:
            data[cid] = y[keep]
        qidx = np.arange(_BASE_QUARTER, _BASE_QUARTER + spec.T, dtype=np.int64)
        quarters[cid] = qidx
        shares[cid] = spec.shares()
        m_vals = spec.gamma * e[spec.burn_in :, 2] + nu[spec.burn_in :]
        instrument[cid] = pd.Series(m_vals, index=qidx)
        shocks[cid] = e[spec.burn_in :]
        residuals[cid] = u[spec.burn_in :]
    names = list(VARIABLES)
    if spec.include_forecast_errors:
        names += ["fe_g", "fe_gdp"]
    dataset = ModelDataset(
        variables=names, data=data, quarters=quarters, shares=shares
    )
    return SynthOutput(
        spec=spec,
        dataset=dataset,
        instrument=instrument,
        shocks=shocks,
        residuals=residuals,
    )


def true_irf(spec: DgpSpec, H: int, target: str = "g") -> IrfSet:
    """Analytic impulse responses from the true parameters, normalized the
    same way as the estimated ones."""
    R = spec.mixing_matrix()
    impact = R[:, 0] if target == "g" else R[:, 1]
    raw = propagate_responses(spec.coef_lags, impact, H)
    values, variables, scale = convert_and_normalize(
        raw, list(VARIABLES), spec.shares(), target
    )
    return IrfSet(
        shock=target,
        variables=variables,
        values=values,
        shares=spec.shares(),
        scale=scale,
    )


def true_multiplier(spec: DgpSpec, H: int) -> MultiplierPath:
    """Cumulative spending multiplier implied by the true parameters."""
    return cumulative_multiplier(true_irf(spec, H, target="g"), H)
