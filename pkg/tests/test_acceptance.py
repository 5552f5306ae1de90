"""Release gates for the whole pipeline, one test per guarantee.

Each test prints a single ``[PASS]``/``[FAIL]`` line with the measured
quantities next to the bound it must satisfy (run pytest with ``-s`` to see
the lines for passing tests).  The Monte Carlo gates are seeded, so reruns
are exactly reproducible.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import time

import numpy as np
import pytest
from click.testing import CliRunner

from fiscaliv.bootstrap import BootstrapConfig, bootstrap_pipeline
from fiscaliv.cli import main
from fiscaliv.regress import CovSpec, ols, tsls
from fiscaliv.svar import (
    ImpactVector,
    compute_irf,
    cumulative_multiplier,
    elasticity_sweep,
    identify_revenue,
    identify_spending,
    propagate_responses,
    structural_impact,
)
from fiscaliv.synth import DgpSpec, simulate, true_irf, true_multiplier
from fiscaliv.var import VarEstimate, VarSpec, fit_var

MODEL = ("g", "r", "gdp")


def _report(name: str, ok: bool, detail: str) -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


def _identify_ck(out):
    est = fit_var(out.dataset, VarSpec(MODEL, lags=out.spec.p))
    rule, shocks = identify_spending(est, out.instrument, scheme="ck")
    rule, shocks = identify_revenue(est, out.instrument, rule, shocks)
    return est, rule, shocks


def test_elasticity_recovery_over_200_replications():
    t0 = time.monotonic()
    a_g_hat, a_r_hat = [], []
    for rep in range(200):
        out = simulate(DgpSpec(seed=rep))
        _, rule, _ = _identify_ck(out)
        a_g_hat.append(rule.a_g)
        a_r_hat.append(rule.a_r)
    elapsed = time.monotonic() - t0
    med_g = float(np.median(a_g_hat))
    med_r = float(np.median(a_r_hat))
    ok = (
        abs(med_g - (-0.4)) <= 0.05
        and abs(med_r - 1.5) <= 0.10
        and elapsed < 120.0
    )
    assert _report(
        "elasticity recovery",
        ok,
        f"median a_g={med_g:.4f} (truth -0.4, tol 0.05), "
        f"median a_r={med_r:.4f} (truth 1.5, tol 0.10), "
        f"{elapsed:.1f}s < 120s",
    )


def test_band_coverage_over_200_replications():
    t0 = time.monotonic()
    truth_m4 = float(true_multiplier(DgpSpec(), 4).values[-1])
    hit_a, hit_m = 0, 0
    reps = 200
    for rep in range(reps):
        out = simulate(DgpSpec(seed=rep))
        bands = bootstrap_pipeline(
            out.dataset,
            VarSpec(MODEL, lags=out.spec.p),
            "ck",
            BootstrapConfig(draws=499, seed=rep),
            out.instrument,
            out.dataset.pooled_shares(),
            H=4,
            multiplier_horizon=4,
        )
        if bands.lower["a_g"] <= -0.4 <= bands.upper["a_g"]:
            hit_a += 1
        lo, hi = bands.lower["multiplier"][4], bands.upper["multiplier"][4]
        if lo <= truth_m4 <= hi:
            hit_m += 1
    elapsed = time.monotonic() - t0
    cov_a, cov_m = hit_a / reps, hit_m / reps
    ok = (
        0.60 <= cov_a <= 0.76
        and 0.60 <= cov_m <= 0.76
        and elapsed < 900.0
    )
    assert _report(
        "68% band coverage",
        ok,
        f"a_g coverage={cov_a:.1%}, M_4 coverage={cov_m:.1%} "
        f"(both within [60%, 76%]), B=499 x {reps} reps, "
        f"{elapsed:.0f}s < 900s",
    )


def test_zero_elasticity_restriction_equals_forced_proxy():
    out = simulate(DgpSpec(T=400, seed=7))
    est = fit_var(out.dataset, VarSpec(MODEL, lags=out.spec.p))
    shares = out.dataset.pooled_shares()

    def run_scheme(scheme, a_g_value=None):
        rule, shocks = identify_spending(
            est, out.instrument, scheme=scheme, a_g_value=a_g_value
        )
        rule, shocks = identify_revenue(est, out.instrument, rule, shocks)
        irfs = {}
        for shock_name, series in (("g", shocks.e_g), ("r", shocks.e_r)):
            impact = structural_impact(est, series, shock_name)
            irfs[shock_name] = compute_irf(
                est, impact, 12, shares, target=shock_name
            )
        mult = cumulative_multiplier(irfs["g"], 8)
        return rule, irfs, mult

    rule_bp, irf_bp, mult_bp = run_scheme("bp")
    rule_ck, irf_ck, mult_ck = run_scheme("ck", a_g_value=0.0)
    diffs = [
        abs(rule_ck.a_g - 0.0),
        abs(rule_ck.a_r - rule_bp.a_r),
        abs(rule_ck.b_gr - rule_bp.b_gr),
        float(np.max(np.abs(irf_ck["g"].values - irf_bp["g"].values))),
        float(np.max(np.abs(irf_ck["r"].values - irf_bp["r"].values))),
        float(np.nanmax(np.abs(mult_ck.values - mult_bp.values))),
    ]
    worst = max(diffs)
    ok = worst <= 1e-12
    assert _report(
        "scheme equivalence",
        ok,
        f"max |proxy(a_g=0) - restriction| over revenue step, IRFs and "
        f"multipliers = {worst:.3e} <= 1e-12",
    )


def test_irf_matches_analytic_truth():
    dgp = DgpSpec()
    R = dgp.mixing_matrix()
    est = VarEstimate(
        spec=VarSpec(MODEL, lags=dgp.coef_lags.shape[0]),
        countries=["C00"],
        coef_lags=dgp.coef_lags,
        coef_exog=None,
        intercepts={},
    )
    worst_irf = 0.0
    for target, col in (("g", 0), ("r", 1)):
        got = compute_irf(
            est, ImpactVector(values=R[:, col], shock=target),
            20, dgp.shares(), target=target,
        )
        want = true_irf(dgp, 20, target=target)
        assert got.variables == want.variables
        worst_irf = max(worst_irf, float(np.max(np.abs(got.values - want.values))))

    rng = np.random.default_rng(41)
    coef = np.array([[[0.5, 0.1, 0.0], [-0.2, 0.3, 0.1], [0.0, 0.1, 0.4]]])
    impact = rng.standard_normal(3)
    raw = propagate_responses(coef, impact, 20)
    oracle = np.stack(
        [np.linalg.matrix_power(coef[0], h) @ impact for h in range(21)]
    )
    worst_comp = float(np.max(np.abs(raw - oracle)))
    ok = worst_irf <= 1e-12 and worst_comp <= 1e-14
    assert _report(
        "analytic impulse responses",
        ok,
        f"max |estimated pipeline - analytic truth| = {worst_irf:.3e} <= 1e-12 "
        f"at H=20; max |companion power - A^h impact| = {worst_comp:.3e} "
        f"<= 1e-14",
    )


def test_regression_kernels_match_brute_force():
    rng = np.random.default_rng(12345)
    n = 40
    X = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
    beta_true = np.array([0.5, -1.0, 2.0])
    u_true = rng.standard_normal(n) * (1.0 + 0.5 * np.abs(X[:, 1]))
    y = X @ beta_true + u_true
    country = np.repeat([f"C{i}" for i in range(4)], 10)
    quarter = np.tile(np.arange(10), 4)
    xtx_inv = np.linalg.inv(X.T @ X)
    b_hat = xtx_inv @ X.T @ y
    u = y - X @ b_hat
    scores = X * u[:, None]
    worst = 0.0

    def track(label, got, want):
        nonlocal worst
        worst = max(worst, float(np.max(np.abs(np.asarray(got) - want))))

    res = ols(y, X, CovSpec.hc0())
    track("ols", res.params, b_hat)
    track("hc0", res.cov, xtx_inv @ (scores.T @ scores) @ xtx_inv)

    meat = scores.T @ scores
    for lag in (1, 2, 3):
        w = 1.0 - lag / 4.0
        gamma = scores[lag:].T @ scores[:-lag]
        meat += w * (gamma + gamma.T)
    nw = ols(y, X, CovSpec.newey_west(3))
    track("nw", nw.cov, 0.5 * ((xtx_inv @ meat @ xtx_inv)
                               + (xtx_inv @ meat @ xtx_inv).T))

    def cluster_meat(labels):
        total = np.zeros((3, 3))
        for lab in np.unique(labels):
            s = scores[labels == lab].sum(axis=0)
            total += np.outer(s, s)
        g = np.unique(labels).size
        return total, g

    m1, g1 = cluster_meat(country)
    m2, g2 = cluster_meat(quarter)
    pair = np.array([f"{c}|{q}" for c, q in zip(country, quarter)])
    m12, g12 = cluster_meat(pair)
    meat2 = (
        g1 / (g1 - 1.0) * m1 + g2 / (g2 - 1.0) * m2 - g12 / (g12 - 1.0) * m12
    )
    tw = ols(y, X, CovSpec.two_way_cluster(country, quarter))
    track("two-way", tw.cov, xtx_inv @ meat2 @ xtx_inv)

    # one endogenous regressor, one instrument
    z = rng.standard_normal(n)
    x_endog = 0.8 * z + 0.3 * rng.standard_normal(n)
    exog = np.column_stack([np.ones(n), rng.standard_normal(n)])
    y2 = 1.5 * x_endog + exog @ np.array([0.2, -0.7]) + rng.standard_normal(n)
    W = np.column_stack([exog, z])
    gamma = np.linalg.lstsq(W, x_endog, rcond=None)[0]
    X_hat = np.column_stack([W @ gamma, exog])
    bt = np.linalg.lstsq(X_hat, y2, rcond=None)[0]
    u2 = y2 - np.column_stack([x_endog, exog]) @ bt
    s2 = X_hat * u2[:, None]
    hx = np.linalg.inv(X_hat.T @ X_hat)
    iv = tsls(y2, x_endog, exog, z, CovSpec.hc0())
    track("tsls", iv.params, bt)
    track("tsls cov", iv.cov, hx @ (s2.T @ s2) @ hx)

    nw0 = ols(y, X, CovSpec.newey_west(0))
    hc0 = ols(y, X, CovSpec.hc0())
    nw0_is_hc0 = np.array_equal(nw0.cov, hc0.cov)

    iv_cl = tsls(y2, x_endog, exog, z, CovSpec.classical())
    fs = iv_cl.first_stage
    t_stat = fs.params[2] / np.sqrt(fs.cov[2, 2])
    f_gap = abs(fs.effective_f - t_stat**2)

    ok = worst <= 1e-10 and nw0_is_hc0 and f_gap <= 1e-8
    assert _report(
        "regression kernels",
        ok,
        f"max |kernel - brute force| = {worst:.3e} <= 1e-10 over "
        f"OLS/2SLS/Newey-West/two-way cluster (n=40); NW(0)==HC0 bitwise: "
        f"{nw0_is_hc0}; |effective F - t^2| = {f_gap:.3e} <= 1e-8",
    )


def test_multiplier_identities():
    out = simulate(DgpSpec(T=600, seed=3))
    est, rule, shocks = _identify_ck(out)
    shares = out.dataset.pooled_shares()
    impact = structural_impact(est, shocks.e_g, "g")
    irf = compute_irf(est, impact, 12, shares, target="g")
    mult = cumulative_multiplier(irf, 8)
    direct = np.array(
        [
            irf.response("gdp")[: h + 1].sum() / irf.response("g")[: h + 1].sum()
            for h in range(9)
        ]
    )
    gap_sum = float(np.max(np.abs(mult.values - direct)))

    scaled = ImpactVector(values=impact.values * -2.5, shock="g")
    irf_scaled = compute_irf(est, scaled, 12, shares, target="g")
    mult_scaled = cumulative_multiplier(irf_scaled, 8)
    gap_scale = float(np.max(np.abs(mult_scaled.values - mult.values)))

    rule_bp, shocks_bp = identify_spending(est, out.instrument, scheme="bp")
    irf_bp = compute_irf(
        est, structural_impact(est, shocks_bp.e_g, "g"), 12, shares, target="g"
    )
    m0_bp = cumulative_multiplier(irf_bp, 0).values[0]
    m0_ck = mult.values[0]
    curve = elasticity_sweep(est, [0.0, rule.a_g], shares)
    gap_sweep = max(
        abs(curve.values[0] - m0_bp), abs(curve.values[1] - m0_ck)
    )

    ok = gap_sum <= 1e-12 and gap_scale <= 1e-12 and gap_sweep <= 1e-12
    assert _report(
        "multiplier identities",
        ok,
        f"|cumulative - direct summation| = {gap_sum:.3e}, "
        f"|rescaled shock drift| = {gap_scale:.3e}, "
        f"|sweep at 0 and a_g_hat vs impact multipliers| = {gap_sweep:.3e} "
        f"(all <= 1e-12)",
    )


def test_full_run_is_byte_identical(tmp_path):
    runner = CliRunner()
    synth = tmp_path / "synth"
    res = runner.invoke(
        main, ["simulate", "--out", str(synth), "--seed", "9", "-T", "160"]
    )
    assert res.exit_code == 0, res.output
    with open(synth / "run_config.json", encoding="utf-8") as fh:
        doc = json.load(fh)
    doc["bootstrap"] = {"draws": 48, "seed": 9, "pre_draws": 20}
    doc["horizons"] = {"irf": 6, "multiplier": 3}
    doc["elasticity_grid"] = [-0.8, -0.4, 0.0]
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(doc))
    out = tmp_path / "results"

    def run(extra):
        if out.exists():
            shutil.rmtree(out)
        r = runner.invoke(main, ["run", "--config", str(cfg),
                                 "--out", str(out)] + extra)
        assert r.exit_code == 0, r.output
        digests = {}
        for name in sorted(os.listdir(out)):
            with open(out / name, "rb") as fh:
                digests[name] = hashlib.sha256(fh.read()).hexdigest()
        return digests

    first = run([])
    rerun_same = run([]) == first
    rerun_threads = run(["--threads", "3"]) == first
    ok = rerun_same and rerun_threads and len(first) > 5
    assert _report(
        "byte-identical runs",
        ok,
        f"{len(first)} artifacts; rerun identical: {rerun_same}; "
        f"threads=3 identical: {rerun_threads}",
    )


REPLICATION_TARGETS = {
    # file in $FISCALIV_REPLICATION_DIR -> (a_g, a_r, effective F)
    "canada.json": (-0.280, 3.81, 15.7),
    "euro.json": (-0.529, 1.44, 16.6),
}


def test_replication_targets_from_user_data(tmp_path):
    """Checked only when the licensed national datasets are supplied locally;
    see the README replication recipe for the expected config layout."""
    data_dir = os.environ.get("FISCALIV_REPLICATION_DIR")
    if not data_dir:
        pytest.skip(
            "[SKIP] replication targets: set FISCALIV_REPLICATION_DIR to a "
            "directory with canada.json / euro.json run configs over the "
            "licensed source data"
        )
    runner = CliRunner()
    checked, details = 0, []
    ok = True
    for name, (t_ag, t_ar, t_f) in REPLICATION_TARGETS.items():
        cfg = os.path.join(data_dir, name)
        if not os.path.isfile(cfg):
            continue
        out = tmp_path / name.replace(".json", "")
        res = runner.invoke(
            main, ["identify", "--config", cfg, "--out", str(out),
                   "--scheme", "ck"]
        )
        assert res.exit_code == 0, res.output
        import pandas as pd

        table = pd.read_csv(out / "table2_elasticities.csv").set_index(
            "parameter"
        )
        a_g = table.loc["a_g", "estimate"]
        a_r = table.loc["a_r", "estimate"]
        eff_f = table.loc["a_g", "effective_f"]
        within = (
            abs(a_g - t_ag) <= 0.10 * abs(t_ag)
            and abs(a_r - t_ar) <= 0.10 * abs(t_ar)
            and abs(eff_f - t_f) <= 0.10 * abs(t_f)
        )
        ok = ok and within
        checked += 1
        details.append(
            f"{name}: a_g={a_g:.3f} (target {t_ag}), a_r={a_r:.2f} "
            f"(target {t_ar}), F={eff_f:.1f} (target {t_f})"
        )
    if checked == 0:
        pytest.skip("[SKIP] replication targets: no recognized configs found")
    assert _report(
        "replication targets (tolerance 10%)", ok, "; ".join(details)
    )
