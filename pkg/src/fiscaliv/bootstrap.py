"""Moving-block bootstrap for the full proxy-SVAR pipeline.

Residual rows and the instrument are resampled jointly in overlapping
blocks (never across country boundaries), data are regenerated recursively
from bias-corrected coefficients with the original initial conditions, and
every draw re-runs estimation, identification, impulse responses,
multipliers and the elasticity sweep.  Bands are Efron percentiles over the
successful draws; the same draw set backs every statistic.

Determinism contract: draw d consumes only the RNG stream spawned from
(seed, kind, d), and draws are written into index-ordered slots, so serial
and thread-pooled runs produce bit-identical output.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import BootstrapError, DegenerateError
from .svar import (
    _instrument_vector,
    convert_and_normalize,
    identify_revenue,
    identify_spending,
    propagate_responses,
)
from .var import VarEstimate, VarSpec, companion_from_coefs, fit_var

MEAN_TOL = 1e-10


@dataclass(frozen=True)
class BootstrapConfig:
    """Knobs for the resampling scheme.

    ``block_length=None`` applies ceil(5.03 * T^0.25) per country.
    ``correct_draws`` subtracts the presampled bias estimate from each
    draw's re-estimated lag matrices (not just from the point estimate);
    ``fix_a_g`` holds the baseline spending elasticity fixed across draws
    for decomposition studies.
    """

    draws: int = 1000
    block_length: int | None = None
    level: float = 0.68
    seed: int = 0
    bias_correct: bool = True
    correct_draws: bool = True
    pre_draws: int = 200
    fix_a_g: bool = False
    max_failure_share: float = 0.10
    threads: int = 1

    def __post_init__(self) -> None:
        if self.draws < 2:
            raise ValueError("need at least 2 draws")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must be in (0, 1)")
        if self.block_length is not None and self.block_length < 1:
            raise ValueError("block length must be >= 1")
        if self.bias_correct and self.pre_draws < 1:
            raise ValueError("bias correction needs pre_draws >= 1")
        if not 0.0 <= self.max_failure_share < 1.0:
            raise ValueError("max_failure_share must be in [0, 1)")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


def default_block_length(T: int) -> int:
    """ceil(5.03 * T^(1/4)), clipped into [1, T]."""
    if T < 1:
        raise ValueError("sample length must be >= 1")
    return int(min(T, max(1, math.ceil(5.03 * T ** 0.25))))


def _position_means(U: np.ndarray, ell: int) -> np.ndarray:
    """Mean of U[r+s] over all admissible block starts r, for s = 0..ell-1."""
    T = U.shape[0]
    n_starts = T - ell + 1
    return np.stack([U[s : s + n_starts].mean(axis=0) for s in range(ell)])


def _block_indices(T: int, ell: int, rng: np.random.Generator) -> np.ndarray:
    n_blocks = -(-T // ell)
    starts = rng.integers(0, T - ell + 1, size=n_blocks)
    return (starts[:, None] + np.arange(ell)[None, :]).ravel()[:T]


def mbb_draw(joint: np.ndarray, ell: int, rng: np.random.Generator,
             n_center: int | None = None) -> np.ndarray:
    """One moving-block resample of joint (residuals, instrument) rows.

    The first ``n_center`` columns (default: all but the last) are treated
    as residuals: after resampling they are recentered by the block-position
    means and then exactly demeaned.  Remaining columns (the instrument)
    ride along on the same row indices untouched.
    """
    U = np.asarray(joint, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    T, k = U.shape
    if not 1 <= ell <= T:
        raise ValueError(f"block length {ell} outside [1, {T}]")
    if n_center is None:
        n_center = k - 1 if k > 1 else 1
    if not 0 <= n_center <= k:
        raise ValueError("n_center outside column range")
    idx = _block_indices(T, ell, rng)
    out = U[idx].copy()
    if n_center:
        centers = _position_means(U[:, :n_center], ell)
        out[:, :n_center] -= centers[np.arange(T) % ell]
        out[:, :n_center] -= out[:, :n_center].mean(axis=0, keepdims=True)
    return out


def efron_percentile(draws, level: float) -> tuple[float, float]:
    """Percentile interval via linear interpolation of order statistics at
    1-based index q*(B-1)+1, q = (1 -/+ level)/2."""
    if not 0.0 <= level < 1.0:
        raise ValueError("level must be in [0, 1)")
    x = np.asarray(draws, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size < 2:
        raise DegenerateError("need at least 2 finite draws")
    lo, hi = np.quantile(x, [(1.0 - level) / 2.0, (1.0 + level) / 2.0],
                         method="linear")
    return float(lo), float(hi)


@dataclass
class KilianResult:
    """Bias-corrected lag matrices with the correction metadata."""

    coef_lags: np.ndarray
    bias: np.ndarray
    delta: float
    applied: bool


def _guarded_correction(coef: np.ndarray, bias: np.ndarray,
                        min_delta: float = 1e-6) -> tuple[np.ndarray, float, bool]:
    """Subtract delta*bias, halving delta until the companion is stable.

    An already-explosive coefficient set is returned unchanged (flagged)."""
    if companion_from_coefs(coef).spectral_radius >= 1.0:
        return coef.copy(), 0.0, False
    delta = 1.0
    while delta >= min_delta:
        cand = coef - delta * bias
        if companion_from_coefs(cand).spectral_radius < 1.0:
            return cand, delta, True
        delta *= 0.5
    return coef.copy(), 0.0, False


class _DrawFailure(Exception):
    """Internal: this draw cannot be identified; drop and count it."""


class _Engine:
    """Precomputed machinery for resample -> regenerate -> refit -> stats."""

    def __init__(self, est: VarEstimate, m_vec: np.ndarray | None,
                 block_length: int | None):
        self.est = est
        spec = est.spec
        self.p = spec.lags
        self.n = len(spec.endogenous)
        self.names = list(spec.endogenous)
        self.countries = list(est.countries)
        # contiguous row ranges per country in the stacked arrays
        self.ranges: dict[str, tuple[int, int]] = {}
        pos = 0
        for c in self.countries:
            t_c = est.nobs[c]
            self.ranges[c] = (pos, pos + t_c)
            pos += t_c
        if pos != est.t_eff:
            raise BootstrapError("residual rows are not country-contiguous")
        self.m = m_vec
        p, n = self.p, self.n
        # initial conditions: recover presample rows from the first design row
        self.y_init: dict[str, np.ndarray] = {}
        for c in self.countries:
            a, _ = self.ranges[c]
            row0 = est.design[a]
            init = np.empty((p, n))
            for i in range(p):
                j = p - i  # y_i sits in the lag-j block of the first row
                init[i] = row0[(j - 1) * n : j * n]
            self.y_init[c] = init
        # fixed (non-resampled) part of each equation: deterministics plus
        # exogenous/trend columns with their estimated coefficients
        k_lag = p * n
        self.fixed_cols = est.design[:, k_lag:]
        other: list[np.ndarray] = []
        if est.coef_exog is not None:
            other.extend(est.coef_exog[j] for j in range(est.coef_exog.shape[0]))
        if est.trends:
            for c in self.countries:
                other.append(est.trends[c][:, None])
        self.coef_other = np.hstack(other) if other else np.zeros((n, 0))
        icepts = np.stack([est.intercepts[c] for c in est.row_country])
        self.fixed_part = icepts + self.fixed_cols @ self.coef_other.T
        # per-country block machinery
        self.ell: dict[str, int] = {}
        self.centers: dict[str, np.ndarray] = {}
        for c in self.countries:
            a, b = self.ranges[c]
            t_c = b - a
            ell = block_length if block_length is not None else \
                default_block_length(t_c)
            if ell > t_c:
                raise ValueError(f"{c}: block length {ell} > sample {t_c}")
            self.ell[c] = ell
            self.centers[c] = _position_means(est.residuals[a:b], ell)
        # demeaning machinery mirroring fit_var's deterministic handling
        pooled = len(self.countries) > 1
        if spec.fixed_effects or (not pooled and spec.constant):
            self.det_mode = "demean"
        elif spec.constant:
            self.det_mode = "const"
        else:
            self.det_mode = "none"
        _, self.group_inverse = np.unique(est.row_country, return_inverse=True)
        self.group_counts = np.bincount(self.group_inverse).astype(float)

    # -- resampling ---------------------------------------------------------

    def resample(self, rngs: list[np.random.Generator]
                 ) -> tuple[np.ndarray, np.ndarray | None]:
        """Blocks for a batch of draws: returns U* (B, N, n) and m* (B, N)."""
        B = len(rngs)
        N = self.est.t_eff
        u_star = np.empty((B, N, self.n))
        m_star = np.empty((B, N)) if self.m is not None else None
        for c in self.countries:
            a, b = self.ranges[c]
            t_c = b - a
            ell = self.ell[c]
            u_c = self.est.residuals[a:b]
            idx = np.stack([_block_indices(t_c, ell, rng) for rng in rngs])
            blocks = u_c[idx]                                   # (B, t_c, n)
            blocks -= self.centers[c][np.arange(t_c) % ell][None]
            blocks -= blocks.mean(axis=1, keepdims=True)
            u_star[:, a:b, :] = blocks
            if m_star is not None:
                m_star[:, a:b] = self.m[a:b][idx]
        return u_star, m_star

    # -- regeneration and refitting ----------------------------------------

    def regenerate(self, u_star: np.ndarray, coef_lags: np.ndarray
                   ) -> np.ndarray:
        """Recurse the VAR over all draws at once: (B, N, n) levels rows."""
        B = u_star.shape[0]
        p, n = self.p, self.n
        out = np.empty((B, self.est.t_eff, n))
        A_T = [coef_lags[j].T for j in range(p)]
        for c in self.countries:
            a, b = self.ranges[c]
            t_c = b - a
            hist = np.broadcast_to(self.y_init[c], (B, p, n)).copy()
            fixed = self.fixed_part[a:b]
            u_c = u_star[:, a:b, :]
            for t in range(t_c):
                y_t = fixed[t] + u_c[:, t, :]
                for j in range(p):
                    y_t = y_t + hist[:, p - 1 - j, :] @ A_T[j]
                out[:, a + t, :] = y_t
                if p > 1:
                    hist[:, :-1, :] = hist[:, 1:, :]
                hist[:, -1, :] = y_t
        return out

    def refit(self, levels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Re-estimate one draw's reduced form: (lag matrices, residuals)."""
        p, n = self.p, self.n
        lag_parts = []
        y_parts = []
        for c in self.countries:
            a, b = self.ranges[c]
            full = np.vstack([self.y_init[c], levels[a:b]])
            T = full.shape[0]
            lag_parts.append(
                np.hstack([full[p - j : T - j] for j in range(1, p + 1)])
            )
            y_parts.append(full[p:])
        X = np.hstack([np.vstack(lag_parts), self.fixed_cols])
        Y = np.vstack(y_parts)
        if self.det_mode == "demean":
            X = self._demean(X)
            Y = self._demean(Y)
        elif self.det_mode == "const":
            X = np.hstack([X, np.ones((X.shape[0], 1))])
        beta, _, _, _ = np.linalg.lstsq(X, Y, rcond=None)
        resid = Y - X @ beta
        coef = beta.T
        A = np.empty((p, n, n))
        for j in range(p):
            A[j] = coef[:, j * n : (j + 1) * n]
        return A, resid

    def _demean(self, arr: np.ndarray) -> np.ndarray:
        sums = np.zeros((self.group_counts.shape[0], arr.shape[1]))
        np.add.at(sums, self.group_inverse, arr)
        means = sums / self.group_counts[:, None]
        return arr - means[self.group_inverse]


class _StatLayout:
    """Fixed flat layout of the per-draw statistic vector."""

    def __init__(self, names: list[str], H: int, mult_h: int,
                 grid: np.ndarray | None):
        self.names = names
        with_bal = "g" in names and "r" in names
        self.irf_vars = names + (["bal"] if with_bal else [])
        self.H = H
        self.mult_h = mult_h
        self.grid = grid
        nv = len(self.irf_vars)
        self.n_irf = (H + 1) * nv
        self.n_mult = mult_h + 1
        self.n_grid = 0 if grid is None else grid.shape[0]
        self.size = 3 + 2 * self.n_irf + self.n_mult + self.n_grid
        o = 3
        self.sl_irf_g = slice(o, o + self.n_irf)
        o += self.n_irf
        self.sl_irf_r = slice(o, o + self.n_irf)
        o += self.n_irf
        self.sl_mult = slice(o, o + self.n_mult)
        o += self.n_mult
        self.sl_grid = slice(o, o + self.n_grid)

    def labels(self) -> list[str]:
        out = ["a_g", "a_r", "b_gr"]
        for shock in ("g", "r"):
            for v in self.irf_vars:
                out += [f"irf_{shock}:{v}:{h}" for h in range(self.H + 1)]
        out += [f"multiplier:{h}" for h in range(self.mult_h + 1)]
        if self.grid is not None:
            out += [f"elasticity:{x:.6g}" for x in self.grid]
        return out

    def unpack(self, vec: np.ndarray) -> dict:
        nv = len(self.irf_vars)
        out = {
            "a_g": vec[0],
            "a_r": vec[1],
            "b_gr": vec[2],
            "irf_g": vec[self.sl_irf_g].reshape(self.H + 1, nv, order="F"),
            "irf_r": vec[self.sl_irf_r].reshape(self.H + 1, nv, order="F"),
            "multiplier": vec[self.sl_mult],
        }
        if self.grid is not None:
            out["elasticity"] = vec[self.sl_grid]
        return out


def _identify_and_measure(layout: _StatLayout, names: list[str],
                          u: np.ndarray, m_vec: np.ndarray | None,
                          coef_lags: np.ndarray, shares: dict,
                          scheme: str, a_g_fixed: float | None = None,
                          full_rule: tuple | None = None) -> np.ndarray:
    """Residual-form identification plus all tracked statistics for one
    residual/instrument set.  Raises _DrawFailure on degeneracy.

    ``full_rule`` pins (a_g, a_r, b_gr) entirely (used for the point
    estimate); ``a_g_fixed`` pins a_g only, leaving the revenue step
    re-estimated (the hold-a_g decomposition mode)."""
    ig, ir, iy = names.index("g"), names.index("r"), names.index("gdp")
    u_g, u_r, u_y = u[:, ig], u[:, ir], u[:, iy]
    s_g = shares["s_g"]
    if full_rule is not None:
        a_g, a_r, b_gr = full_rule
        e_g = u_g - a_g * u_y
    else:
        if a_g_fixed is not None:
            a_g = float(a_g_fixed)
        elif scheme == "bp":
            a_g = 0.0
        else:
            mask = np.isfinite(m_vec)
            mm = m_vec[mask]
            den = float(mm @ u_y[mask])
            if den == 0.0 or not np.isfinite(den):
                raise _DrawFailure("instrument orthogonal to output residuals")
            a_g = float(mm @ u_g[mask]) / den
        e_g = u_g - a_g * u_y
        mask = np.isfinite(m_vec)
        mm = m_vec[mask]
        zz = np.array(
            [
                [mm @ u_y[mask], mm @ e_g[mask]],
                [e_g[mask] @ u_y[mask], e_g[mask] @ e_g[mask]],
            ]
        )
        zy = np.array([mm @ u_r[mask], e_g[mask] @ u_r[mask]])
        try:
            a_r, b_gr = np.linalg.solve(zz, zy)
        except np.linalg.LinAlgError:
            raise _DrawFailure("revenue moment system singular") from None
        a_r, b_gr = float(a_r), float(b_gr)
    e_r = u_r - a_r * u_y - b_gr * e_g

    vec = np.empty(layout.size)
    vec[0], vec[1], vec[2] = a_g, a_r, b_gr
    irf_cols = {}
    for key, e, target in (("g", e_g, "g"), ("r", e_r, "r")):
        ee = float(e @ e)
        if ee <= 0.0:
            raise _DrawFailure(f"zero-variance {key} shock")
        impact = (u.T @ e) / ee
        raw = propagate_responses(coef_lags, impact, layout.H)
        try:
            values, _, _ = convert_and_normalize(raw, names, shares, target)
        except DegenerateError as exc:
            raise _DrawFailure(str(exc)) from None
        irf_cols[key] = values
    vec[layout.sl_irf_g] = irf_cols["g"].ravel(order="F")
    vec[layout.sl_irf_r] = irf_cols["r"].ravel(order="F")
    gdp_resp = irf_cols["g"][: layout.mult_h + 1, layout.irf_vars.index("gdp")]
    g_resp = irf_cols["g"][: layout.mult_h + 1, layout.irf_vars.index("g")]
    num = np.cumsum(gdp_resp)
    den = np.cumsum(g_resp)
    if np.any(np.abs(den) <= 1e-12):
        raise _DrawFailure("zero cumulative spending response")
    vec[layout.sl_mult] = num / den
    if layout.grid is not None:
        for i, a in enumerate(layout.grid):
            e = u_g - a * u_y
            ee = float(e @ e)
            if ee <= 0.0:
                raise _DrawFailure("degenerate elasticity grid point")
            h = (u.T @ e) / ee
            d = h[ig] * s_g
            if d == 0.0 or not np.isfinite(d):
                raise _DrawFailure("degenerate elasticity grid point")
            vec[layout.sl_grid][i] = h[iy] / d
    if not np.all(np.isfinite(vec)):
        raise _DrawFailure("non-finite statistic")
    return vec


@dataclass
class BootstrapBands:
    """Efron bands for every tracked statistic, plus the draw bookkeeping."""

    level: float
    point: dict
    lower: dict
    upper: dict
    irf_variables: list[str]
    grid: np.ndarray | None
    n_draws: int
    n_failed: int
    block_lengths: dict[str, int]
    seed: int
    bias_applied: bool
    labels: list[str] = field(default_factory=list)
    archive: np.ndarray | None = None

    def to_frame(self) -> pd.DataFrame:
        """Tidy rows: statistic, point, lo, hi."""
        layout = self._layout()
        flat_point = _flatten(self.point, layout)
        flat_lo = _flatten(self.lower, layout)
        flat_hi = _flatten(self.upper, layout)
        rows = [
            {
                "statistic": lab,
                "point": flat_point[lab],
                "lo": flat_lo[lab],
                "hi": flat_hi[lab],
            }
            for lab in self.labels
        ]
        return pd.DataFrame(rows)

    def _layout(self) -> "_StatLayout":
        H = self.point["irf_g"].shape[0] - 1
        mult_h = self.point["multiplier"].shape[0] - 1
        return _StatLayout(
            [v for v in self.irf_variables if v != "bal"], H, mult_h, self.grid
        )

    def archive_frame(self) -> pd.DataFrame:
        if self.archive is None:
            raise ValueError("archive was not retained")
        stats, draws = [], []
        values = []
        for j, lab in enumerate(self.labels):
            for d in range(self.archive.shape[0]):
                stats.append(lab)
                draws.append(d)
                values.append(self.archive[d, j])
        return pd.DataFrame({"statistic": stats, "draw": draws, "value": values})


def _flatten(stats: dict, layout: _StatLayout) -> dict:
    out = {
        "a_g": stats["a_g"],
        "a_r": stats["a_r"],
        "b_gr": stats["b_gr"],
    }
    for shock in ("g", "r"):
        mat = stats[f"irf_{shock}"]
        for j, v in enumerate(layout.irf_vars):
            for h in range(mat.shape[0]):
                out[f"irf_{shock}:{v}:{h}"] = mat[h, j]
    for h, val in enumerate(stats["multiplier"]):
        out[f"multiplier:{h}"] = val
    if layout.grid is not None:
        for x, val in zip(layout.grid, stats["elasticity"]):
            out[f"elasticity:{x:.6g}"] = val
    return out


def _draw_rng(seed: int, kind: int, draw: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(kind, draw))
    )


def kilian_correct(est: VarEstimate, pre_draws: int, seed: int,
                   block_length: int | None = None) -> KilianResult:
    """Bootstrap estimate of small-sample coefficient bias, subtracted with a
    stationarity guard (correction shrunk by halving until stable)."""
    engine = _Engine(est, None, block_length)
    base = est.coef_lags
    if companion_from_coefs(base).spectral_radius >= 1.0:
        return KilianResult(coef_lags=base.copy(),
                            bias=np.zeros_like(base), delta=0.0, applied=False)
    rngs = [_draw_rng(seed, 0, b) for b in range(pre_draws)]
    u_star, _ = engine.resample(rngs)
    levels = engine.regenerate(u_star, base)
    acc = np.zeros_like(base)
    for b in range(pre_draws):
        A_b, _ = engine.refit(levels[b])
        acc += A_b
    bias = acc / pre_draws - base
    coef, delta, applied = _guarded_correction(base, bias)
    return KilianResult(coef_lags=coef, bias=bias, delta=delta, applied=applied)


def bootstrap_pipeline(data, spec: VarSpec, scheme: str,
                       config: BootstrapConfig, m, shares: dict | None = None,
                       H: int = 20, multiplier_horizon: int | None = None,
                       elasticity_grid=None, cov="hc0", nw_lags: int = 0,
                       keep_archive: bool = False) -> BootstrapBands:
    """Full-pipeline bootstrap bands for one identification scheme.

    Per draw: jointly resample (residuals, instrument) in moving blocks
    within country, regenerate data from bias-corrected coefficients and the
    original initial conditions, refit the reduced form, re-identify with
    the resampled instrument (residual form, Frisch-Waugh-equivalent), and
    recompute IRFs (both fiscal shocks), the spending multiplier path, and
    the elasticity curve.  Draws that cannot be identified are dropped; more
    than ``max_failure_share`` failures aborts.
    """
    if scheme not in ("bp", "ck"):
        raise ValueError(f"unknown scheme {scheme!r}")
    est = fit_var(data, spec)
    rule, shocks = identify_spending(
        est, m=m if scheme == "ck" else None, scheme=scheme,
        cov=cov, nw_lags=nw_lags,
    )
    rule, shocks = identify_revenue(est, m, rule, shocks, cov=cov,
                                    nw_lags=nw_lags)
    if shares is None:
        shares = data.pooled_shares()
    if isinstance(shares, (tuple, list)):
        shares = {"s_g": float(shares[0]), "s_r": float(shares[1])}
    m_vec = _instrument_vector(est, m)
    grid = None
    if elasticity_grid is not None:
        grid = np.asarray(elasticity_grid, dtype=float)
        if grid.ndim != 1 or not np.all(np.isfinite(grid)):
            raise ValueError("elasticity grid must be finite and 1-D")

    if config.bias_correct:
        kil = kilian_correct(est, config.pre_draws, config.seed,
                             config.block_length)
    else:
        kil = KilianResult(coef_lags=est.coef_lags.copy(),
                           bias=np.zeros_like(est.coef_lags),
                           delta=0.0, applied=False)

    mult_h = H if multiplier_horizon is None else multiplier_horizon
    if mult_h > H:
        raise ValueError("multiplier horizon exceeds IRF horizon")
    names = list(spec.endogenous)
    layout = _StatLayout(names, H, mult_h, grid)
    engine = _Engine(est, m_vec, config.block_length)

    point_vec = _identify_and_measure(
        layout, names, est.residuals, m_vec, kil.coef_lags, shares, scheme,
        full_rule=(rule.a_g, rule.a_r, rule.b_gr),
    )

    B = config.draws
    stats = np.full((B, layout.size), np.nan)
    failed = np.zeros(B, dtype=bool)
    a_g_fixed = rule.a_g if config.fix_a_g else None

    def run_range(d0: int, d1: int) -> None:
        rngs = [_draw_rng(config.seed, 1, d) for d in range(d0, d1)]
        u_star, m_star = engine.resample(rngs)
        levels = engine.regenerate(u_star, kil.coef_lags)
        for i, d in enumerate(range(d0, d1)):
            A_d, resid_d = engine.refit(levels[i])
            if config.correct_draws and kil.applied:
                A_use, _, _ = _guarded_correction(A_d, kil.bias)
            else:
                A_use = A_d
            try:
                stats[d] = _identify_and_measure(
                    layout, names, resid_d,
                    None if m_star is None else m_star[i],
                    A_use, shares, scheme, a_g_fixed=a_g_fixed,
                )
            except _DrawFailure:
                failed[d] = True

    n_workers = max(1, min(config.threads, B))
    chunk = -(-B // n_workers)
    ranges = [(lo, min(lo + chunk, B)) for lo in range(0, B, chunk)]
    if n_workers == 1:
        for lo, hi in ranges:
            run_range(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(lambda r: run_range(*r), ranges))

    n_failed = int(failed.sum())
    if n_failed > config.max_failure_share * B:
        raise BootstrapError(
            f"{n_failed}/{B} draws failed identification"
        )
    good = stats[~failed]
    if good.shape[0] < 2:
        raise BootstrapError("fewer than 2 successful draws")
    ql, qh = (1.0 - config.level) / 2.0, (1.0 + config.level) / 2.0
    lo_vec, hi_vec = np.quantile(good, [ql, qh], axis=0, method="linear")

    return BootstrapBands(
        level=config.level,
        point=layout.unpack(point_vec),
        lower=layout.unpack(lo_vec),
        upper=layout.unpack(hi_vec),
        irf_variables=layout.irf_vars,
        grid=grid,
        n_draws=B,
        n_failed=n_failed,
        block_lengths=dict(engine.ell),
        seed=config.seed,
        bias_applied=kil.applied,
        labels=layout.labels(),
        archive=stats if keep_archive else None,
    )
