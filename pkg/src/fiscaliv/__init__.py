"""Fiscal SVAR-IV toolkit.

Panel VAR estimation with country fixed effects, proxy identification of
fiscal shocks via trading-partner forecast-error instruments, moving-block
bootstrap inference, impulse responses in percent of GDP and cumulative
spending multipliers.
"""
import os as _os

# Pin BLAS pools before numpy ever loads (this module is imported first by
# the console script): worker threading is managed explicitly downstream and
# results must not depend on the machine's core count.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")
del _os, _var

__version__ = "0.1.0"

from .bootstrap import (
    BootstrapBands,
    BootstrapConfig,
    bootstrap_pipeline,
    default_block_length,
    efron_percentile,
    kilian_correct,
    mbb_draw,
)
from .config import RunConfig, load_config
from .dataio import (
    ModelDataset,
    RawPanel,
    Rule,
    SeriesSpec,
    build_model_dataset,
    format_quarter,
    load_panel,
    parse_quarter,
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
    ExportWeights,
    ForecastVintage,
    InstrumentSeries,
    aggregate_instrument,
    build_forecast_errors,
    export_share_weights,
    forecast_error,
    pretest,
)
from .regress import CovSpec, RegressionResult, ols, tsls, within_demean
from .svar import (
    ElasticityCurve,
    ImpactVector,
    IrfSet,
    MultiplierPath,
    PolicyRule,
    ShockSeries,
    compute_irf,
    cumulative_multiplier,
    elasticity_sweep,
    identify_revenue,
    identify_spending,
    structural_impact,
)
from .synth import DgpSpec, SynthOutput, simulate, true_irf, true_multiplier
from .var import (
    CompanionForm,
    LagSelection,
    VarEstimate,
    VarSpec,
    companion,
    fit_var,
    residual_autocorr,
    select_lags,
)

__all__ = [
    "__version__",
    "AlignmentError",
    "BootstrapBands",
    "BootstrapConfig",
    "BootstrapError",
    "CompanionForm",
    "ConfigError",
    "CovSpec",
    "DataError",
    "DegenerateError",
    "DesignError",
    "DgpSpec",
    "ElasticityCurve",
    "ExportWeights",
    "FiscalIVError",
    "ForecastVintage",
    "IdentificationError",
    "ImpactVector",
    "InstrumentSeries",
    "IrfSet",
    "LagSelection",
    "ModelDataset",
    "MultiplierPath",
    "PolicyRule",
    "RawPanel",
    "RegressionResult",
    "Rule",
    "RunConfig",
    "SeriesSpec",
    "ShockSeries",
    "StabilityError",
    "SynthOutput",
    "VarEstimate",
    "VarSpec",
    "aggregate_instrument",
    "bootstrap_pipeline",
    "build_forecast_errors",
    "build_model_dataset",
    "companion",
    "compute_irf",
    "cumulative_multiplier",
    "default_block_length",
    "efron_percentile",
    "elasticity_sweep",
    "export_share_weights",
    "fit_var",
    "forecast_error",
    "format_quarter",
    "identify_revenue",
    "identify_spending",
    "kilian_correct",
    "load_config",
    "load_panel",
    "mbb_draw",
    "ols",
    "parse_quarter",
    "pretest",
    "residual_autocorr",
    "select_lags",
    "simulate",
    "structural_impact",
    "true_irf",
    "true_multiplier",
    "tsls",
    "within_demean",
]
