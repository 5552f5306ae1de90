"""Deterministic regression kernel: OLS, 2SLS, robust covariances, effective F.

Covariance conventions (all switchable via :class:`CovSpec`):

* ``classical``      sigma^2 (X'X)^-1 with sigma^2 = u'u/(T-k)
* ``hc0``            unscaled Eicker-Huber-White sandwich
* ``newey_west``     Bartlett-kernel HAC, weights w_j = 1 - j/(L+1)
* ``two_way_cluster``  V_1 + V_2 - V_12, each a clustered sandwich with a
  G/(G-1) factor per clustering dimension

Coefficients are always solved by SVD least squares, never via an explicit
inverse of X'X.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, DesignError

RANK_RTOL = 1e-10

_COV_KINDS = ("classical", "hc0", "newey_west", "two_way_cluster")


@dataclass(frozen=True, eq=False)
class CovSpec:
    """Covariance estimator choice for a regression.

    ``clusters`` are two label arrays (e.g. country and time) covering every
    row; they are only used for the two-way kind.  ``time`` orders rows for
    the Newey-West kernel; rows sharing a ``groups`` label form separate
    HAC blocks (lagged cross-products never span groups).
    """

    kind: str = "hc0"
    lags: int = 0
    clusters: tuple[np.ndarray, np.ndarray] | None = None
    groups: np.ndarray | None = None
    dof_adjust: bool = False

    def __post_init__(self) -> None:
        if self.kind not in _COV_KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.kind == "newey_west" and self.lags < 0:
            raise ValueError("newey_west lag length must be >= 0")
        if self.kind == "two_way_cluster" and self.clusters is None:
            raise ValueError("two_way_cluster requires cluster labels")

    @staticmethod
    def classical() -> "CovSpec":
        return CovSpec(kind="classical")

    @staticmethod
    def hc0() -> "CovSpec":
        return CovSpec(kind="hc0")

    @staticmethod
    def newey_west(lags: int, groups: np.ndarray | None = None) -> "CovSpec":
        return CovSpec(kind="newey_west", lags=lags, groups=groups)

    @staticmethod
    def two_way_cluster(dim1, dim2) -> "CovSpec":
        return CovSpec(
            kind="two_way_cluster",
            clusters=(np.asarray(dim1), np.asarray(dim2)),
        )


@dataclass
class FirstStage:
    """First-stage diagnostics for a single instrumented regressor."""

    params: np.ndarray
    cov: np.ndarray
    instrument_slice: slice
    effective_f: float | None


@dataclass
class RegressionResult:
    params: np.ndarray
    residuals: np.ndarray
    cov: np.ndarray
    cov_kind: str
    nobs: int
    nparams: int
    adj_r2: float
    names: list[str] | None = None
    first_stage: FirstStage | None = None
    extra_dof: int = 0  # absorbed parameters (fixed effects) counted in dof

    @property
    def se(self) -> np.ndarray:
        """Standard errors; negative diagonal entries (possible for the
        two-way cluster matrix) are clamped to zero with a warning."""
        d = np.diag(self.cov).copy()
        if np.any(d < 0):
            warnings.warn(
                "negative covariance diagonal clamped to 0 when extracting "
                "standard errors",
                RuntimeWarning,
                stacklevel=2,
            )
            d = np.clip(d, 0.0, None)
        return np.sqrt(d)

    def to_dict(self) -> dict:
        out = {
            "params": self.params.tolist(),
            "se": self.se.tolist(),
            "cov_kind": self.cov_kind,
            "nobs": self.nobs,
            "nparams": self.nparams,
            "adj_r2": self.adj_r2,
        }
        if self.names is not None:
            out["names"] = list(self.names)
        if self.first_stage is not None and self.first_stage.effective_f is not None:
            out["effective_f"] = self.first_stage.effective_f
        return out


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"expected 2D design, got shape {X.shape}")
    return X


def _check_full_rank(X: np.ndarray, names: list[str] | None = None) -> None:
    """Raise DesignError naming the first column lying in the span of the
    preceding ones when X is rank deficient (relative tolerance on singular
    values)."""
    if X.shape[1] == 0:
        return
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0.0 or s[-1] > RANK_RTOL * s[0]:
        return
    tol = RANK_RTOL * s[0]
    for j in range(X.shape[1]):
        sj = np.linalg.svd(X[:, : j + 1], compute_uv=False)
        if sj[-1] <= tol:
            label = names[j] if names is not None else f"column {j}"
            raise DesignError(f"design matrix is rank deficient at {label}")
    raise DesignError("design matrix is rank deficient")


def _solve_ls(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    return beta


def _adjusted_r2(y: np.ndarray, u: np.ndarray, nobs: int, nparams: int) -> float:
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss == 0.0:
        return float("nan")
    r2 = 1.0 - float(u @ u) / tss
    if nobs <= nparams:
        return float("nan")
    return 1.0 - (1.0 - r2) * (nobs - 1) / (nobs - nparams)


def _cluster_meat(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Sum of outer products of within-cluster score sums; returns (meat, G)."""
    _, inverse = np.unique(labels, return_inverse=True)
    g = int(inverse.max()) + 1
    k = scores.shape[1]
    sums = np.zeros((g, k))
    np.add.at(sums, inverse, scores)
    return sums.T @ sums, g


def covariance(X, residuals, spec: CovSpec) -> np.ndarray:
    """Sandwich covariance of OLS-type coefficients for design X and residuals.

    HC0: (X'X)^-1 (sum u_i^2 x_i x_i') (X'X)^-1.  Newey-West adds Bartlett
    weighted lag terms; two-way cluster is V_1 + V_2 - V_12 (CGM).
    """
    X = _as_matrix(X)
    u = np.asarray(residuals, dtype=float).ravel()
    n, k = X.shape
    if u.shape[0] != n:
        raise ValueError("residual length does not match design rows")
    xtx = X.T @ X
    scores = X * u[:, None]

    if spec.kind == "classical":
        sigma2 = float(u @ u) / (n - k)
        meat = sigma2 * xtx
    elif spec.kind == "hc0":
        meat = scores.T @ scores
    elif spec.kind == "newey_west":
        L = spec.lags
        if L >= n:
            raise ValueError(f"newey_west lags {L} must be < nobs {n}")
        if spec.groups is None:
            blocks = [scores]
        else:
            glab = np.asarray(spec.groups)
            if glab.shape[0] != n:
                raise ValueError("group labels must cover all rows")
            blocks = [scores[glab == gv] for gv in np.unique(glab)]
        meat = scores.T @ scores
        for j in range(1, L + 1):
            w = 1.0 - j / (L + 1.0)
            gamma = np.zeros((k, k))
            for b in blocks:
                if b.shape[0] > j:
                    gamma += b[j:].T @ b[:-j]
            meat += w * (gamma + gamma.T)
    elif spec.kind == "two_way_cluster":
        c1, c2 = spec.clusters
        c1 = np.asarray(c1)
        c2 = np.asarray(c2)
        if c1.shape[0] != n or c2.shape[0] != n:
            raise ValueError("cluster labels must cover all rows")
        inter = np.char.add(np.char.add(c1.astype(str), "\x1f"), c2.astype(str))
        m1, g1 = _cluster_meat(scores, c1)
        m2, g2 = _cluster_meat(scores, c2)
        m12, g12 = _cluster_meat(scores, inter)
        meat = (
            (g1 / (g1 - 1.0)) * m1
            + (g2 / (g2 - 1.0)) * m2
            - (g12 / (g12 - 1.0)) * m12
            if min(g1, g2, g12) > 1
            else m1 + m2 - m12
        )
    else:  # pragma: no cover - guarded by CovSpec
        raise ValueError(spec.kind)

    half = np.linalg.solve(xtx, meat)
    cov = np.linalg.solve(xtx, half.T).T
    if spec.dof_adjust and spec.kind in ("hc0", "newey_west"):
        cov = cov * (n / (n - k))
    return 0.5 * (cov + cov.T)


def ols(y, X, cov: CovSpec | None = None, names: list[str] | None = None,
        extra_dof: int = 0) -> RegressionResult:
    """Equation-by-equation least squares with a pluggable covariance.

    ``extra_dof`` counts parameters absorbed before the call (e.g. fixed
    effects removed by demeaning) so that adjusted R^2 and the classical
    variance use the proper degrees of freedom.
    """
    cov = cov or CovSpec.hc0()
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n, k = X.shape
    if y.shape[0] != n:
        raise ValueError("y length does not match design rows")
    if n < k + extra_dof:
        raise DesignError(f"{n} observations < {k + extra_dof} parameters")
    _check_full_rank(X, names)
    beta = _solve_ls(X, y)
    u = y - X @ beta
    nparams = k + extra_dof
    if cov.kind == "classical" and extra_dof:
        sigma2 = float(u @ u) / (n - nparams)
        xtx = X.T @ X
        vcv = sigma2 * np.linalg.solve(xtx, np.eye(k))
    else:
        vcv = covariance(X, u, cov)
    return RegressionResult(
        params=beta,
        residuals=u,
        cov=vcv,
        cov_kind=cov.kind,
        nobs=n,
        nparams=nparams,
        adj_r2=_adjusted_r2(y, u, n, nparams),
        names=names,
        extra_dof=extra_dof,
    )


def effective_first_stage_f(first_stage: RegressionResult,
                            instrument_index: int = -1) -> float:
    """Montiel Olea-Pflueger effective F for one instrument / one endogenous
    regressor: pi^2 / Var_robust(pi), with pi the instrument's first-stage
    coefficient."""
    k = first_stage.params.shape[0]
    idx = instrument_index % k
    pi = float(first_stage.params[idx])
    var = float(first_stage.cov[idx, idx])
    if var <= 0.0:
        if pi == 0.0 and var == 0.0:
            return 0.0
        raise DegenerateError("zero robust variance in first stage")
    return pi * pi / var


def tsls(y, X_endog, X_exog, Z, cov: CovSpec | None = None,
         names: list[str] | None = None, extra_dof: int = 0) -> RegressionResult:
    """Two-stage least squares of y on [X_endog | X_exog] with instruments Z.

    The reported residuals use the original (not fitted) regressors; the
    sandwich covariance is evaluated on the projected design.  For a single
    endogenous regressor the first-stage block carries the effective F.
    """
    cov = cov or CovSpec.hc0()
    y = np.asarray(y, dtype=float).ravel()
    Xe = _as_matrix(X_endog)
    Z = _as_matrix(Z)
    n = y.shape[0]
    if X_exog is None or (hasattr(X_exog, "shape") and np.size(X_exog) == 0):
        Xx = np.empty((n, 0))
    else:
        Xx = _as_matrix(X_exog)
    if Xe.shape[0] != n or Xx.shape[0] != n or Z.shape[0] != n:
        raise ValueError("all blocks must share the number of rows")
    n_end, n_inst = Xe.shape[1], Z.shape[1]
    if n_inst < n_end:
        raise DesignError(
            f"order condition fails: {n_inst} instruments < {n_end} endogenous"
        )
    W = np.hstack([Xx, Z])
    _check_full_rank(W)
    X = np.hstack([Xe, Xx])
    _check_full_rank(X, names)

    # first stage per endogenous column
    gamma = _solve_ls(W, Xe)
    Xe_hat = W @ gamma
    X_hat = np.hstack([Xe_hat, Xx])
    _check_full_rank(X_hat)

    beta = _solve_ls(X_hat, y)
    u = y - X @ beta
    nparams = X.shape[1] + extra_dof
    if n < nparams:
        raise DesignError(f"{n} observations < {nparams} parameters")
    vcv = covariance(X_hat, u, cov)

    first = None
    if n_end == 1:
        fs = ols(Xe[:, 0], W, cov, extra_dof=extra_dof)
        inst_slice = slice(Xx.shape[1], Xx.shape[1] + n_inst)
        eff_f = None
        if n_inst == 1:
            eff_f = effective_first_stage_f(fs, instrument_index=Xx.shape[1])
        first = FirstStage(
            params=fs.params,
            cov=fs.cov,
            instrument_slice=inst_slice,
            effective_f=eff_f,
        )

    return RegressionResult(
        params=beta,
        residuals=u,
        cov=vcv,
        cov_kind=cov.kind,
        nobs=n,
        nparams=nparams,
        adj_r2=_adjusted_r2(y, u, n, nparams),
        names=names,
        first_stage=first,
        extra_dof=extra_dof,
    )


def within_demean(values: np.ndarray, groups: np.ndarray) -> tuple[np.ndarray, dict]:
    """Subtract group means column-wise; returns (demeaned, means-by-group)."""
    v = np.asarray(values, dtype=float)
    single = v.ndim == 1
    if single:
        v = v[:, None]
    labels, inverse = np.unique(np.asarray(groups), return_inverse=True)
    sums = np.zeros((labels.shape[0], v.shape[1]))
    np.add.at(sums, inverse, v)
    counts = np.bincount(inverse).astype(float)
    means = sums / counts[:, None]
    out = v - means[inverse]
    means_by_group = {lab: means[i].copy() for i, lab in enumerate(labels)}
    if single:
        out = out[:, 0]
        means_by_group = {k: m[0] for k, m in means_by_group.items()}
    return out, means_by_group
