"""Command-line pipeline driver.

Every subcommand loads one JSON config, runs a slice of the pipeline and
writes plain CSV/JSON artifacts.  Output bytes are deterministic for a
given (config, seed): floats are written with repr (shortest round-trip),
row order is fixed, and no timestamps appear anywhere.  ``run`` executes
the whole chain and finishes with a manifest hashing every input and
artifact; the manifest embeds the resolved config, so a finished run can
be reproduced from the manifest alone.
"""
from __future__ import annotations

import functools
import hashlib
import importlib.metadata
import json
import os
import platform

import click
import numpy as np
import pandas as pd

from . import __version__

from .bootstrap import BootstrapBands, bootstrap_pipeline
from .config import RunConfig, load_config
from .dataio import (
    ModelDataset,
    RawPanel,
    build_model_dataset,
    format_quarter,
    load_panel,
)
from .errors import (
    AlignmentError,
    BootstrapError,
    ConfigError,
    DataError,
    DegenerateError,
    DesignError,
    FiscalIVError,
    IdentificationError,
    StabilityError,
)
from .instrument import (
    DEFAULT_G7,
    InstrumentSeries,
    aggregate_instrument,
    build_forecast_errors,
    export_share_weights,
    pretest,
    read_exports,
    read_instrument,
    read_vintages,
    write_instrument,
)
from .svar import (
    compute_irf,
    cumulative_multiplier,
    elasticity_sweep,
    identify_revenue,
    identify_spending,
    structural_impact,
)
from .svgplot import Panel, render_panels
from .synth import DgpSpec, simulate
from .var import fit_var, residual_autocorr, select_lags

_ERROR_MODULE = {
    ConfigError: "config",
    AlignmentError: "instrument",
    DataError: "dataio",
    DesignError: "var",
    StabilityError: "var",
    IdentificationError: "svar",
    DegenerateError: "svar",
    BootstrapError: "bootstrap",
}


def _module_of(exc: FiscalIVError) -> str:
    for klass in type(exc).__mro__:
        if klass in _ERROR_MODULE:
            return _ERROR_MODULE[klass]
    return "fiscaliv"


def _guard(fn):
    """Map domain errors to exit codes: config problems 2, estimation 3."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"error [config]: {exc}", err=True)
            raise SystemExit(2) from None
        except FiscalIVError as exc:
            click.echo(f"error [{_module_of(exc)}]: {exc}", err=True)
            raise SystemExit(3) from None

    return wrapper


# ---------------------------------------------------------------------------
# deterministic writers


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _write_csv(path: str, frame: pd.DataFrame) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(str(c) for c in frame.columns) + "\n")
        for row in frame.itertuples(index=False):
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _outdir(cfg_dir: str | None, out: str | None, fallback: str) -> str:
    target = out or cfg_dir or fallback
    os.makedirs(target, exist_ok=True)
    return target


# ---------------------------------------------------------------------------
# shared pipeline pieces


def _overrides(**kwargs) -> dict:
    return {k: v for k, v in kwargs.items() if v is not None}


def _load_dataset(cfg: RunConfig) -> tuple[RawPanel, ModelDataset]:
    cfg.require_files()
    raw = load_panel(cfg.panel_path, cfg.series_spec)
    return raw, build_model_dataset(raw, cfg.series_spec)


def _drop_country(data: ModelDataset, country: str) -> ModelDataset:
    if country not in data.data:
        raise ConfigError(f"leave-out country {country!r} not in the panel")
    if len(data.data) < 2:
        raise ConfigError("cannot leave out the only country")
    keep = [c for c in data.countries if c != country]
    return ModelDataset(
        variables=list(data.variables),
        data={c: data.data[c] for c in keep},
        quarters={c: data.quarters[c] for c in keep},
        shares={c: data.shares[c] for c in keep},
    )


def _realized_growth(raw: RawPanel, variable: str) -> dict[str, pd.Series]:
    """Quarterly log-differences of a raw series, per country."""
    out = {}
    for country in raw.countries:
        table = raw.pivot(country)
        if variable not in table.columns:
            continue
        series = table[variable].dropna().sort_index()
        vals = series.to_numpy(dtype=float)
        if (vals <= 0.0).any():
            raise DataError(f"{country}: nonpositive {variable} level")
        growth = np.diff(np.log(vals))
        out[country] = pd.Series(growth, index=series.index[1:])
    return out


def _construct_instruments(cfg: RunConfig, raw: RawPanel,
                           countries: list[str]) -> dict[str, InstrumentSeries]:
    """Trading-partner forecast-error instruments for each model country."""
    vintages = read_vintages(cfg.vintages_path)
    realized = _realized_growth(raw, cfg.realized_variable)
    errors = build_forecast_errors(vintages, realized,
                                   variable=cfg.realized_variable)
    exports = read_exports(cfg.exports_path) if cfg.exports_path else {}
    out: dict[str, InstrumentSeries] = {}
    for country in countries:
        pool = [p for p in sorted(errors) if p != country]
        if cfg.partners is not None:
            allowed = set(cfg.partners)
            pool = [p for p in pool if p in allowed]
        if cfg.g7_only:
            g7 = set(DEFAULT_G7)
            pool = [p for p in pool if p in g7]
        if not pool:
            raise DataError(f"{country}: no partner forecast errors available")
        err = {p: errors[p] for p in pool}
        if len(pool) == 1:
            out[country] = aggregate_instrument(err, None, country=country)
        else:
            if country not in exports:
                raise DataError(
                    f"{country}: multiple partners need export weights"
                )
            weights = export_share_weights(
                exports[country], domestic=country
            ).restrict(pool)
            out[country] = aggregate_instrument(err, weights, country=country)
    return out


def _acquire_instruments(cfg: RunConfig, raw: RawPanel,
                         countries: list[str]) -> dict[str, InstrumentSeries]:
    if cfg.vintages_path is not None:
        return _construct_instruments(cfg, raw, countries)
    series = read_instrument(cfg.instrument_path)
    found = {}
    for country in countries:
        if country in series:
            found[country] = InstrumentSeries(
                country=country, series=series[country],
                partners=(), scheme="file",
            )
    if not found:
        raise DataError("instrument file covers no model country")
    return found


def _dataset_series(data: ModelDataset, variable: str) -> dict[str, pd.Series]:
    j = data.column(variable)
    return {
        c: pd.Series(data.data[c][:, j], index=data.quarters[c])
        for c in data.countries
    }


def _pretest_rows(cfg: RunConfig, data: ModelDataset,
                  instruments: dict[str, InstrumentSeries]) -> pd.DataFrame:
    """Instrument relevance/exogeneity regressions where the panel carries
    the needed forecast-error series; missing series just drop the row."""
    m_series = {c: inst.series for c, inst in instruments.items()}
    rows = []
    jobs = []
    if "fe_gdp" in data.variables:
        jobs.append(("relevance", _dataset_series(data, "fe_gdp"), m_series))
    if "fe_g" in data.variables:
        jobs.append(("exogeneity", m_series, _dataset_series(data, "fe_g")))
    for kind, lhs, rhs in jobs:
        res = pretest(
            kind, lhs, rhs,
            fixed_effects=cfg.pretest_fixed_effects,
            cov=cfg.pretest_covariance,
            nw_lags=cfg.nw_lags,
        )
        slope = float(res.params[0])
        se = float(res.se[0])
        rows.append(
            {
                "kind": kind,
                "slope": slope,
                "se": se,
                "tstat": slope / se if se > 0.0 else np.nan,
                "adj_r2": res.adj_r2,
                "nobs": res.nobs,
                "cov": cfg.pretest_covariance,
            }
        )
    columns = ["kind", "slope", "se", "tstat", "adj_r2", "nobs", "cov"]
    return pd.DataFrame(rows, columns=columns)


def _rule_rows(scheme: str, rule) -> list[dict]:
    rows = []
    for name in ("a_g", "a_r", "b_gr"):
        rows.append(
            {
                "scheme": scheme,
                "parameter": name,
                "estimate": getattr(rule, name),
                "se": rule.se.get(name, np.nan),
                "effective_f": rule.effective_f.get(name, np.nan),
                "nobs": rule.nobs.get(name, np.nan),
            }
        )
    return rows


def _identify_scheme(cfg: RunConfig, est, instruments, scheme: str):
    rule, shocks = identify_spending(
        est, m=instruments if scheme == "ck" else None, scheme=scheme,
        cov=cfg.covariance, nw_lags=cfg.nw_lags,
    )
    rule, shocks = identify_revenue(
        est, instruments, rule, shocks,
        cov=cfg.covariance, nw_lags=cfg.nw_lags,
    )
    return rule, shocks


def _point_irfs(cfg: RunConfig, est, shocks, shares) -> dict[str, "object"]:
    out = {}
    for target, series in (("g", shocks.e_g), ("r", shocks.e_r)):
        impact = structural_impact(est, series, target)
        out[target] = compute_irf(est, impact, cfg.horizon, shares,
                                  target=target)
    return out


def _irf_frame_from_bands(bands: BootstrapBands) -> pd.DataFrame:
    rows = []
    for shock in ("g", "r"):
        point = bands.point[f"irf_{shock}"]
        lo = bands.lower[f"irf_{shock}"]
        hi = bands.upper[f"irf_{shock}"]
        for j, var in enumerate(bands.irf_variables):
            for h in range(point.shape[0]):
                rows.append(
                    {
                        "shock": shock,
                        "variable": var,
                        "horizon": h,
                        "value": point[h, j],
                        "lo": lo[h, j],
                        "hi": hi[h, j],
                    }
                )
    return pd.DataFrame(rows)


def _irf_svg(path: str, frame: pd.DataFrame, shock: str, title: str) -> None:
    panels = []
    order = [v for v in ("gdp", "g", "r", "bal") if v in set(frame["variable"])]
    sub = frame[frame["shock"] == shock]
    for var in order:
        block = sub[sub["variable"] == var].sort_values("horizon")
        panels.append(
            Panel(
                title=f"{title}: {var}",
                x=block["horizon"].to_numpy(dtype=float),
                y=block["value"].to_numpy(dtype=float),
                lo=block["lo"].to_numpy(dtype=float),
                hi=block["hi"].to_numpy(dtype=float),
                xlabel="quarters",
            )
        )
    if panels:
        render_panels(path, panels)


def _bands_frame(scheme: str, bands: BootstrapBands) -> pd.DataFrame:
    frame = bands.to_frame()
    frame.insert(0, "scheme", scheme)
    return frame


def _multiplier_frame(scheme: str, bands: BootstrapBands) -> pd.DataFrame:
    point = bands.point["multiplier"]
    lo = bands.lower["multiplier"]
    hi = bands.upper["multiplier"]
    return pd.DataFrame(
        {
            "scheme": scheme,
            "horizon": np.arange(point.shape[0]),
            "multiplier": point,
            "lo": lo,
            "hi": hi,
        }
    )


def _sweep_frame(scheme: str, bands: BootstrapBands) -> pd.DataFrame:
    if bands.grid is None or "elasticity" not in bands.point:
        return pd.DataFrame(
            columns=["scheme", "a_g", "impact_multiplier", "lo", "hi"]
        )
    return pd.DataFrame(
        {
            "scheme": scheme,
            "a_g": bands.grid,
            "impact_multiplier": bands.point["elasticity"],
            "lo": bands.lower["elasticity"],
            "hi": bands.upper["elasticity"],
        }
    )


def run_pipeline(cfg: RunConfig, outdir: str, suffix: str = "",
                 echo=click.echo) -> dict[str, str]:
    """One full estimation pass; returns {artifact name: path}."""
    raw, data = _load_dataset(cfg)
    if cfg.leave_out:
        data = _drop_country(data, cfg.leave_out)
    instruments = _acquire_instruments(cfg, raw, data.countries)
    artifacts: dict[str, str] = {}

    def emit_csv(stem: str, frame: pd.DataFrame) -> str:
        name = f"{stem}{suffix}.csv"
        path = os.path.join(outdir, name)
        _write_csv(path, frame)
        artifacts[name] = path
        return path

    # pretests (rows only where the panel has forecast-error series)
    table1 = _pretest_rows(cfg, data, instruments)
    emit_csv("table1_pretests", table1)

    # optional lag selection, then the reduced form
    var_spec = cfg.var_spec
    if cfg.p_max is not None:
        selection = select_lags(data, var_spec, cfg.p_max)
        emit_csv("lag_selection", selection.table.reset_index())
        var_spec = var_spec.with_lags(selection.best("aic"))
    est = fit_var(data, var_spec)
    echo(
        f"reduced form{suffix}: p={var_spec.lags}, countries={len(data.countries)}, "
        f"rows={est.t_eff}"
    )
    shares = data.pooled_shares()

    table2_rows: list[dict] = []
    band_frames, mult_frames, sweep_frames = [], [], []
    for scheme in cfg.schemes():
        rule, shocks = _identify_scheme(cfg, est, instruments, scheme)
        table2_rows.extend(_rule_rows(scheme, rule))
        bands = bootstrap_pipeline(
            data, var_spec, scheme, cfg.bootstrap, instruments,
            shares=shares, H=cfg.horizon,
            multiplier_horizon=cfg.multiplier_horizon,
            elasticity_grid=cfg.elasticity_grid,
            cov=cfg.covariance, nw_lags=cfg.nw_lags,
        )
        irf_frame = _irf_frame_from_bands(bands)
        emit_csv(f"irf_{scheme}", irf_frame)
        band_frames.append(_bands_frame(scheme, bands))
        mult_frames.append(_multiplier_frame(scheme, bands))
        sweep_frames.append(_sweep_frame(scheme, bands))
        echo(
            f"{scheme}{suffix}: a_g={rule.a_g:.4f} a_r={rule.a_r:.4f} "
            f"b_gr={rule.b_gr:.4f} draws={bands.n_draws} "
            f"failed={bands.n_failed}"
        )
        if cfg.emit_svg:
            for shock in ("g", "r"):
                name = f"irf_{scheme}_{shock}{suffix}.svg"
                _irf_svg(
                    os.path.join(outdir, name), irf_frame, shock,
                    f"{scheme} {shock} shock",
                )
                artifacts[name] = os.path.join(outdir, name)
            mname = f"multiplier_{scheme}{suffix}.svg"
            mf = mult_frames[-1]
            render_panels(
                os.path.join(outdir, mname),
                [
                    Panel(
                        title=f"{scheme}: cumulative multiplier",
                        x=mf["horizon"].to_numpy(dtype=float),
                        y=mf["multiplier"].to_numpy(dtype=float),
                        lo=mf["lo"].to_numpy(dtype=float),
                        hi=mf["hi"].to_numpy(dtype=float),
                        xlabel="quarters",
                    )
                ],
            )
            artifacts[mname] = os.path.join(outdir, mname)

    emit_csv(
        "table2_elasticities",
        pd.DataFrame(
            table2_rows,
            columns=["scheme", "parameter", "estimate", "se",
                     "effective_f", "nobs"],
        ),
    )
    emit_csv("multipliers", pd.concat(mult_frames, ignore_index=True))
    emit_csv("elasticity_sweep", pd.concat(sweep_frames, ignore_index=True))
    emit_csv("bands", pd.concat(band_frames, ignore_index=True))
    return artifacts


def _manifest(cfg: RunConfig, outdir: str, artifacts: dict[str, str]) -> dict:
    inputs = {}
    for path in (cfg.panel_path, cfg.instrument_path, cfg.vintages_path,
                 cfg.exports_path):
        if path is not None and os.path.isfile(path):
            inputs[path] = _sha256(path)
    return {
        "package": {"name": "fiscaliv", "version": __version__},
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pd.__version__,
            "click": importlib.metadata.version("click"),
        },
        "seed": cfg.bootstrap.seed,
        "config": cfg.to_json(),
        "inputs": inputs,
        "artifacts": {
            name: _sha256(path) for name, path in sorted(artifacts.items())
        },
    }


# ---------------------------------------------------------------------------
# commands


@click.group()
@click.version_option(__version__, prog_name="fiscaliv")
def main() -> None:
    """Fiscal SVAR-IV pipeline: instruments, estimation, identification,
    bootstrap inference and multipliers."""


_config_opt = click.option(
    "--config", "config_path", required=True,
    type=click.Path(), help="JSON run configuration.",
)
_out_opt = click.option(
    "--out", "out", default=None, type=click.Path(),
    help="Output directory (default: config output_dir).",
)
_seed_opt = click.option(
    "--seed", default=None, type=int, help="Override the bootstrap seed."
)
_scheme_opt = click.option(
    "--scheme", default=None, type=click.Choice(["bp", "ck", "both"]),
    help="Identification scheme(s) to run.",
)


@main.command()
@_config_opt
@_out_opt
@_guard
def ingest(config_path: str, out: str | None) -> None:
    """Load the raw panel, apply the series rules and write the model
    dataset plus a coverage report."""
    cfg = load_config(config_path)
    raw, data = _load_dataset(cfg)
    outdir = _outdir(cfg.output_dir, out, "out")
    _write_csv(os.path.join(outdir, "model_dataset.csv"), data.to_tidy())
    _write_json(os.path.join(outdir, "coverage.json"), raw.coverage())
    for country in data.countries:
        first, last = data.window(country)
        click.echo(
            f"{country}: {first}..{last} "
            f"({data.data[country].shape[0]} quarters)"
        )


@main.command()
@_config_opt
@_out_opt
@click.option("--g7-only", is_flag=True, default=None,
              help="Restrict partners to the G7.")
@_guard
def instrument(config_path: str, out: str | None, g7_only: bool | None) -> None:
    """Construct the trading-partner forecast-error instrument and write
    it as instrument.csv."""
    cfg = load_config(config_path, _overrides(g7_only=g7_only))
    if cfg.vintages_path is None:
        raise ConfigError("config supplies no vintages; nothing to construct")
    cfg.require_files()
    raw = load_panel(cfg.panel_path, cfg.series_spec)
    data = build_model_dataset(raw, cfg.series_spec)
    instruments = _construct_instruments(cfg, raw, data.countries)
    outdir = _outdir(cfg.output_dir, out, "out")
    write_instrument(os.path.join(outdir, "instrument.csv"), instruments)
    for country in sorted(instruments):
        inst = instruments[country]
        click.echo(
            f"{country}: {len(inst.series)} quarters, "
            f"partners={','.join(inst.partners)} ({inst.scheme})"
        )


@main.command(name="pretest")
@_config_opt
@_out_opt
@_guard
def pretest_cmd(config_path: str, out: str | None) -> None:
    """Instrument relevance and exogeneity regressions."""
    cfg = load_config(config_path)
    raw, data = _load_dataset(cfg)
    instruments = _acquire_instruments(cfg, raw, data.countries)
    table = _pretest_rows(cfg, data, instruments)
    outdir = _outdir(cfg.output_dir, out, "out")
    _write_csv(os.path.join(outdir, "table1_pretests.csv"), table)
    if table.empty:
        click.echo("no forecast-error series in the panel; wrote header only")
    for row in table.itertuples(index=False):
        click.echo(
            f"{row.kind}: slope={row.slope:.4f} se={row.se:.4f} "
            f"n={row.nobs}"
        )


@main.command()
@_config_opt
@_out_opt
@click.option("--lags", default=None, type=str,
              help="Lag order, or a MIN-MAX grid to select over.")
@_guard
def fit(config_path: str, out: str | None, lags: str | None) -> None:
    """Estimate the reduced-form panel VAR; optionally select the lag
    order by information criteria first."""
    overrides = {}
    p_grid = None
    if lags is not None:
        if "-" in lags.strip().strip("-") or ":" in lags:
            sep = ":" if ":" in lags else "-"
            lo, hi = lags.split(sep, 1)
            p_grid = (int(lo), int(hi))
            overrides["lags"] = max(1, int(lo))
        else:
            overrides["lags"] = int(lags)
    cfg = load_config(config_path, overrides)
    raw, data = _load_dataset(cfg)
    outdir = _outdir(cfg.output_dir, out, "out")
    var_spec = cfg.var_spec
    if p_grid is not None:
        if p_grid[0] != 1:
            raise ConfigError("lag grids must start at 1")
        selection = select_lags(data, var_spec, p_grid[1])
        _write_csv(
            os.path.join(outdir, "lag_selection.csv"),
            selection.table.reset_index(),
        )
        best = selection.best("aic")
        click.echo(f"selected p={best} by aic")
        var_spec = var_spec.with_lags(best)
    est = fit_var(data, var_spec)
    _write_json(os.path.join(outdir, "var_estimate.json"), est.to_json())
    acf = residual_autocorr(est, max_lag=min(8, est.t_eff - 2))
    _write_csv(os.path.join(outdir, "residual_acf.csv"), acf.to_frame())
    click.echo(
        f"p={var_spec.lags} rows={est.t_eff} "
        f"dof/eq={est.dof_per_eq}"
    )


@main.command()
@_config_opt
@_out_opt
@_scheme_opt
@_guard
def identify(config_path: str, out: str | None, scheme: str | None) -> None:
    """Estimate the fiscal-rule coefficients for each scheme and write
    the elasticity table and the structural shock series."""
    cfg = load_config(config_path, _overrides(scheme=scheme))
    raw, data = _load_dataset(cfg)
    instruments = _acquire_instruments(cfg, raw, data.countries)
    est = fit_var(data, cfg.var_spec)
    outdir = _outdir(cfg.output_dir, out, "out")
    rows = []
    for sch in cfg.schemes():
        rule, shocks = _identify_scheme(cfg, est, instruments, sch)
        rows.extend(_rule_rows(sch, rule))
        shock_frame = pd.DataFrame(
            {
                "country": shocks.row_country,
                "quarter": [format_quarter(int(q)) for q in shocks.row_qidx],
                "e_g": shocks.e_g,
                "e_r": shocks.e_r,
            }
        )
        _write_csv(os.path.join(outdir, f"shocks_{sch}.csv"), shock_frame)
        f_txt = ""
        if "a_g" in rule.effective_f:
            f_txt = f" F={rule.effective_f['a_g']:.2f}"
        click.echo(
            f"{sch}: a_g={rule.a_g:.4f} a_r={rule.a_r:.4f} "
            f"b_gr={rule.b_gr:.4f}{f_txt}"
        )
    _write_csv(
        os.path.join(outdir, "table2_elasticities.csv"),
        pd.DataFrame(
            rows,
            columns=["scheme", "parameter", "estimate", "se",
                     "effective_f", "nobs"],
        ),
    )


@main.command()
@_config_opt
@_out_opt
@_scheme_opt
@_guard
def irf(config_path: str, out: str | None, scheme: str | None) -> None:
    """Point impulse responses (no bands) in percent of GDP."""
    cfg = load_config(config_path, _overrides(scheme=scheme))
    raw, data = _load_dataset(cfg)
    instruments = _acquire_instruments(cfg, raw, data.countries)
    est = fit_var(data, cfg.var_spec)
    shares = data.pooled_shares()
    outdir = _outdir(cfg.output_dir, out, "out")
    for sch in cfg.schemes():
        _, shocks = _identify_scheme(cfg, est, instruments, sch)
        irfs = _point_irfs(cfg, est, shocks, shares)
        frame = pd.concat(
            [irfs["g"].to_frame(), irfs["r"].to_frame()], ignore_index=True
        )
        _write_csv(os.path.join(outdir, f"irf_{sch}.csv"), frame)
        peak = float(np.nanmax(irfs["g"].response("gdp")))
        click.echo(f"{sch}: peak gdp response {peak:.4f} (% of GDP)")


@main.command()
@_config_opt
@_out_opt
@_scheme_opt
@_guard
def multiplier(config_path: str, out: str | None, scheme: str | None) -> None:
    """Point cumulative spending multipliers (no bands)."""
    cfg = load_config(config_path, _overrides(scheme=scheme))
    raw, data = _load_dataset(cfg)
    instruments = _acquire_instruments(cfg, raw, data.countries)
    est = fit_var(data, cfg.var_spec)
    shares = data.pooled_shares()
    outdir = _outdir(cfg.output_dir, out, "out")
    frames = []
    for sch in cfg.schemes():
        _, shocks = _identify_scheme(cfg, est, instruments, sch)
        irfs = _point_irfs(cfg, est, shocks, shares)
        path = cumulative_multiplier(irfs["g"], cfg.multiplier_horizon)
        frame = path.to_frame()
        frame.insert(0, "scheme", sch)
        frames.append(frame)
        click.echo(f"{sch}: M({cfg.multiplier_horizon})={path.values[-1]:.4f}")
    _write_csv(
        os.path.join(outdir, "multipliers.csv"),
        pd.concat(frames, ignore_index=True),
    )


@main.command()
@_config_opt
@_out_opt
@_guard
def sweep(config_path: str, out: str | None) -> None:
    """Impact multiplier as a function of the imposed output elasticity
    of spending."""
    cfg = load_config(config_path)
    raw, data = _load_dataset(cfg)
    est = fit_var(data, cfg.var_spec)
    curve = elasticity_sweep(est, cfg.elasticity_grid, data.pooled_shares())
    outdir = _outdir(cfg.output_dir, out, "out")
    frame = curve.to_frame()
    _write_csv(os.path.join(outdir, "elasticity_sweep.csv"), frame)
    click.echo(
        f"grid {curve.grid[0]:g}..{curve.grid[-1]:g} "
        f"({curve.grid.shape[0]} points)"
    )


@main.command(name="bootstrap")
@_config_opt
@_out_opt
@_seed_opt
@_scheme_opt
@click.option("--archive", is_flag=True, default=False,
              help="Also write every draw of every statistic.")
@click.option("--threads", default=None, type=int,
              help="Worker threads for the bootstrap loop.")
@_guard
def bootstrap_cmd(config_path: str, out: str | None, seed: int | None,
                  scheme: str | None, archive: bool,
                  threads: int | None) -> None:
    """Moving-block bootstrap bands for all tracked statistics."""
    cfg = load_config(
        config_path, _overrides(seed=seed, scheme=scheme, threads=threads)
    )
    raw, data = _load_dataset(cfg)
    if cfg.leave_out:
        data = _drop_country(data, cfg.leave_out)
    instruments = _acquire_instruments(cfg, raw, data.countries)
    outdir = _outdir(cfg.output_dir, out, "out")
    frames = []
    for sch in cfg.schemes():
        bands = bootstrap_pipeline(
            data, cfg.var_spec, sch, cfg.bootstrap, instruments,
            H=cfg.horizon, multiplier_horizon=cfg.multiplier_horizon,
            elasticity_grid=cfg.elasticity_grid,
            cov=cfg.covariance, nw_lags=cfg.nw_lags,
            keep_archive=archive,
        )
        frames.append(_bands_frame(sch, bands))
        if archive:
            _write_csv(
                os.path.join(outdir, f"bootstrap_draws_{sch}.csv"),
                bands.archive_frame(),
            )
        click.echo(
            f"{sch}: {bands.n_draws} draws, {bands.n_failed} failed, "
            f"block lengths {bands.block_lengths}"
        )
    _write_csv(
        os.path.join(outdir, "bands.csv"),
        pd.concat(frames, ignore_index=True),
    )


@main.command()
@click.option("--config", "config_path", default=None, type=click.Path(),
              help="JSON config with a synth section (optional).")
@_out_opt
@_seed_opt
@click.option("--periods", "-T", "periods", default=None, type=int,
              help="Sample length per country.")
@click.option("--countries", default=None, type=int,
              help="Number of simulated countries.")
@_guard
def simulate_cmd(config_path: str | None, out: str | None, seed: int | None,
                 periods: int | None, countries: int | None) -> None:
    """Simulate the synthetic economy and write a ready-to-run input set
    (panel, instrument, series spec, truth, run config)."""
    doc = {}
    if config_path is not None:
        if not os.path.isfile(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        with open(config_path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{config_path}: invalid JSON ({exc})") from None
    synth_doc = dict(doc.get("synth") or {})
    if seed is not None:
        synth_doc["seed"] = seed
    if periods is not None:
        synth_doc["T"] = periods
    if countries is not None:
        synth_doc["countries"] = countries
    synth_doc.setdefault("include_forecast_errors", True)
    from .config import _dgp_from_doc

    try:
        spec = _dgp_from_doc(synth_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad synth parameters: {exc}") from None
    outdir = _outdir(doc.get("output_dir"), out, "synth_out")
    output = simulate(spec)
    paths = output.write(outdir)
    run_cfg = {
        "data": {
            "panel": paths["panel"],
            "instrument": paths["instrument"],
            "series_spec": paths["series_spec"],
        },
        "model": {
            "endogenous": ["g", "r", "gdp"],
            "lags": spec.p,
            "fixed_effects": spec.countries > 1,
            "constant": True,
        },
        "scheme": "both",
        "bootstrap": {"draws": 200, "seed": spec.seed},
        "horizons": {"irf": 20, "multiplier": 8},
        "output_dir": os.path.join(outdir, "results"),
    }
    cfg_path = os.path.join(outdir, "run_config.json")
    _write_json(cfg_path, run_cfg)
    click.echo(
        f"simulated {spec.countries} countries x {spec.T} quarters "
        f"(seed {spec.seed}) -> {outdir}"
    )
    click.echo(f"run config: {cfg_path}")


@main.command()
@_config_opt
@_out_opt
@_seed_opt
@_scheme_opt
@click.option("--lags", default=None, type=int, help="Override the lag order.")
@click.option("--leave-out", "leave_out", default=None, type=str,
              help="Drop one country from the sample.")
@click.option("--g7-only", is_flag=True, default=None,
              help="Restrict instrument partners to the G7.")
@click.option("--threads", default=None, type=int,
              help="Worker threads for the bootstrap loop.")
@_guard
def run(config_path: str, out: str | None, seed: int | None,
        scheme: str | None, lags: int | None, leave_out: str | None,
        g7_only: bool | None, threads: int | None) -> None:
    """Full pipeline: pretests, reduced form, identification, bootstrap,
    multipliers, sweep, robustness variants and the manifest."""
    cfg = load_config(
        config_path,
        _overrides(seed=seed, scheme=scheme, lags=lags, leave_out=leave_out,
                   g7_only=g7_only, out=out, threads=threads),
    )
    outdir = _outdir(cfg.output_dir, None, "out")
    artifacts = run_pipeline(cfg, outdir)

    base_lags = cfg.var_spec.lags
    for p in cfg.lag_grid:
        if p == base_lags:
            continue
        variant = load_config(
            config_path,
            _overrides(seed=seed, scheme=scheme, lags=p,
                       leave_out=leave_out, g7_only=g7_only, out=out,
                       threads=threads),
        )
        artifacts.update(run_pipeline(variant, outdir, suffix=f"_p{p}"))

    if cfg.leave_one_out and cfg.leave_out is None:
        raw, data = _load_dataset(cfg)
        if len(data.countries) > 1:
            for country in data.countries:
                variant = load_config(
                    config_path,
                    _overrides(seed=seed, scheme=scheme, lags=lags,
                               leave_out=country, g7_only=g7_only, out=out,
                               threads=threads),
                )
                artifacts.update(
                    run_pipeline(variant, outdir, suffix=f"_lo{country}")
                )

    manifest_path = os.path.join(outdir, "run_manifest.json")
    _write_json(manifest_path, _manifest(cfg, outdir, artifacts))
    click.echo(f"manifest: {manifest_path} ({len(artifacts)} artifacts)")


if __name__ == "__main__":
    main()
