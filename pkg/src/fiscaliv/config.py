"""Run configuration: one JSON document drives the whole pipeline."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import BootstrapConfig
from .dataio import SeriesSpec
from .errors import ConfigError
from .synth import DgpSpec
from .var import VarSpec


@dataclass
class RunConfig:
    """Resolved configuration for an end-to-end run.

    ``scheme`` is bp | ck | both.  ``lag_grid`` and ``leave_one_out`` are
    the robustness directives: each entry produces a suffixed artifact set.
    ``leave_out`` drops one country from the main sample instead.
    """

    panel_path: str
    series_spec: SeriesSpec
    var_spec: VarSpec
    scheme: str = "both"
    instrument_path: str | None = None
    vintages_path: str | None = None
    exports_path: str | None = None
    realized_variable: str = "gdp"
    partners: tuple[str, ...] | None = None
    g7_only: bool = False
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    horizon: int = 20
    multiplier_horizon: int = 8
    elasticity_grid: np.ndarray = field(
        default_factory=lambda: np.linspace(-2.0, 2.0, 41)
    )
    covariance: str = "hc0"
    nw_lags: int = 0
    pretest_fixed_effects: bool = False
    pretest_covariance: str = "hc0"
    output_dir: str = "out"
    lag_grid: tuple[int, ...] = ()
    leave_one_out: bool = False
    leave_out: str | None = None
    p_max: int | None = None
    emit_svg: bool = True
    synth: DgpSpec | None = None
    raw: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.scheme not in ("bp", "ck", "both"):
            raise ConfigError(f"scheme must be bp|ck|both, got {self.scheme!r}")
        if self.horizon < 1 or self.multiplier_horizon < 0:
            raise ConfigError("horizons must be >= 1")
        if self.multiplier_horizon > self.horizon:
            raise ConfigError("multiplier horizon exceeds IRF horizon")
        if self.instrument_path is None and self.vintages_path is None:
            raise ConfigError("need an instrument CSV or forecast vintages")
        if self.g7_only and self.vintages_path is None:
            raise ConfigError(
                "g7-only filtering applies to instrument construction; "
                "it needs vintages/exports inputs, not a precomputed instrument"
            )
        grid = np.asarray(self.elasticity_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or not np.all(np.isfinite(grid)):
            raise ConfigError("elasticity grid must be a finite 1-D array")
        self.elasticity_grid = grid

    def schemes(self) -> list[str]:
        return ["bp", "ck"] if self.scheme == "both" else [self.scheme]

    def require_files(self) -> None:
        for label, path in (
            ("panel", self.panel_path),
            ("instrument", self.instrument_path),
            ("vintages", self.vintages_path),
            ("exports", self.exports_path),
        ):
            if path is not None and not os.path.isfile(path):
                raise ConfigError(f"{label} file not found: {path}")

    def to_json(self) -> dict:
        return {
            "data": {
                "panel": self.panel_path,
                "instrument": self.instrument_path,
                "vintages": self.vintages_path,
                "exports": self.exports_path,
                "series_spec": self.series_spec.to_json(),
            },
            "model": {
                "endogenous": list(self.var_spec.endogenous),
                "exogenous": list(self.var_spec.exogenous),
                "lags": self.var_spec.lags,
                "fixed_effects": self.var_spec.fixed_effects,
                "constant": self.var_spec.constant,
                "detrend": self.var_spec.detrend,
            },
            "scheme": self.scheme,
            "instrument_options": {
                "partners": None if self.partners is None else list(self.partners),
                "g7_only": self.g7_only,
                "realized_variable": self.realized_variable,
            },
            # threads is omitted on purpose: worker count never changes the
            # output bytes, so it is not part of a run's identity
            "bootstrap": {
                "draws": self.bootstrap.draws,
                "block_length": self.bootstrap.block_length,
                "level": self.bootstrap.level,
                "seed": self.bootstrap.seed,
                "bias_correct": self.bootstrap.bias_correct,
                "correct_draws": self.bootstrap.correct_draws,
                "pre_draws": self.bootstrap.pre_draws,
                "fix_a_g": self.bootstrap.fix_a_g,
                "max_failure_share": self.bootstrap.max_failure_share,
            },
            "horizons": {
                "irf": self.horizon,
                "multiplier": self.multiplier_horizon,
            },
            "elasticity_grid": self.elasticity_grid.tolist(),
            "covariance": {"kind": self.covariance, "nw_lags": self.nw_lags},
            "pretest": {
                "fixed_effects": self.pretest_fixed_effects,
                "covariance": self.pretest_covariance,
            },
            "output_dir": self.output_dir,
            "robustness": {
                "lag_grid": list(self.lag_grid),
                "leave_one_out": self.leave_one_out,
                "leave_out": self.leave_out,
            },
            "p_max": self.p_max,
            "emit_svg": self.emit_svg,
            "synth": self.raw.get("synth"),
        }


def _dgp_from_doc(doc: dict) -> DgpSpec:
    kwargs = {}
    fields = (
        "a_g", "a_r", "b_gr", "phi_g", "phi_r", "gamma", "nu_scale",
        "s_g", "s_r", "countries", "T", "burn_in", "seed", "dist", "t_dof",
        "intercept_scale", "include_forecast_errors",
    )
    for name in fields:
        if name in doc:
            kwargs[name] = doc[name]
    if "sigma" in doc:
        kwargs["sigma"] = tuple(float(s) for s in doc["sigma"])
    if "coef_lags" in doc:
        kwargs["coef_lags"] = np.asarray(doc["coef_lags"], dtype=float)
    return DgpSpec(**kwargs)


def load_config(source, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from a JSON path or mapping.

    A run manifest (the document written next to the artifacts) is accepted
    too: its embedded resolved config is extracted, which makes any finished
    run re-runnable from its manifest alone.
    """
    if isinstance(source, str):
        if not os.path.isfile(source):
            raise ConfigError(f"config file not found: {source}")
        try:
            with open(source, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: invalid JSON ({exc})") from None
    else:
        doc = dict(source)
    if "config" in doc and "artifacts" in doc:  # run manifest
        doc = doc["config"]
    overrides = overrides or {}

    data = doc.get("data", {})
    if "panel" not in data:
        raise ConfigError("config must name a panel CSV under data.panel")
    spec_doc = data.get("series_spec")
    if spec_doc is None:
        series_spec = SeriesSpec.default_nine()
    elif isinstance(spec_doc, str):
        if not os.path.isfile(spec_doc):
            raise ConfigError(f"series spec file not found: {spec_doc}")
        series_spec = SeriesSpec.from_json(spec_doc)
    else:
        series_spec = SeriesSpec.from_json(spec_doc)

    model = doc.get("model", {})
    if "endogenous" not in model:
        raise ConfigError("config must list model.endogenous variables")
    lags = int(overrides.get("lags", model.get("lags", 1)))
    try:
        var_spec = VarSpec(
            endogenous=tuple(model["endogenous"]),
            lags=lags,
            exogenous=tuple(model.get("exogenous", ())),
            fixed_effects=bool(model.get("fixed_effects", False)),
            constant=bool(model.get("constant", True)),
            detrend=bool(model.get("detrend", False)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    boot_doc = dict(doc.get("bootstrap", {}))
    if "seed" in overrides:
        boot_doc["seed"] = overrides["seed"]
    if "threads" in overrides:
        boot_doc["threads"] = overrides["threads"]
    try:
        bootstrap = BootstrapConfig(**boot_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad bootstrap section: {exc}") from None

    horizons = doc.get("horizons", {})
    grid_doc = doc.get("elasticity_grid")
    if grid_doc is None:
        grid = np.linspace(-2.0, 2.0, 41)
    elif isinstance(grid_doc, dict):
        grid = np.linspace(
            float(grid_doc["start"]), float(grid_doc["stop"]),
            int(grid_doc["num"]),
        )
    else:
        grid = np.asarray(grid_doc, dtype=float)

    cov = doc.get("covariance", {})
    inst = doc.get("instrument_options", {})
    robust = doc.get("robustness", {})
    synth = None
    if doc.get("synth") is not None:
        try:
            synth = _dgp_from_doc(doc["synth"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad synth section: {exc}") from None

    partners = inst.get("partners")
    cfg = RunConfig(
        panel_path=data["panel"],
        series_spec=series_spec,
        var_spec=var_spec,
        scheme=str(overrides.get("scheme", doc.get("scheme", "both"))),
        instrument_path=data.get("instrument"),
        vintages_path=data.get("vintages"),
        exports_path=data.get("exports"),
        realized_variable=inst.get("realized_variable", "gdp"),
        partners=None if partners is None else tuple(partners),
        g7_only=bool(overrides.get("g7_only", inst.get("g7_only", False))),
        bootstrap=bootstrap,
        horizon=int(horizons.get("irf", 20)),
        multiplier_horizon=int(horizons.get("multiplier", 8)),
        elasticity_grid=grid,
        covariance=cov.get("kind", "hc0"),
        nw_lags=int(cov.get("nw_lags", 0)),
        pretest_fixed_effects=bool(
            doc.get("pretest", {}).get("fixed_effects", False)
        ),
        pretest_covariance=doc.get("pretest", {}).get("covariance", "hc0"),
        output_dir=str(overrides.get("out", doc.get("output_dir", "out"))),
        lag_grid=tuple(int(p) for p in robust.get("lag_grid", ())),
        leave_one_out=bool(robust.get("leave_one_out", False)),
        leave_out=overrides.get("leave_out", robust.get("leave_out")),
        p_max=None if doc.get("p_max") is None else int(doc["p_max"]),
        emit_svg=bool(doc.get("emit_svg", True)),
        synth=synth,
        raw=doc,
    )
    return cfg
