"""Exception hierarchy shared across the pipeline."""
from __future__ import annotations


class FiscalIVError(Exception):
    """Base class for all pipeline errors."""


class DataError(FiscalIVError):
    """Malformed, inconsistent or out-of-domain input data."""


class AlignmentError(DataError):
    """Series that should share an index do not."""


class DesignError(FiscalIVError):
    """Regression design failure: rank deficiency, order condition, sample size."""


class IdentificationError(FiscalIVError):
    """Structural identification failed (weak/degenerate first stage or shock)."""


class StabilityError(FiscalIVError):
    """Companion matrix is explosive and no override was given."""


class DegenerateError(FiscalIVError):
    """A required quantity has zero variance or is otherwise degenerate."""


class BootstrapError(FiscalIVError):
    """Bootstrap failure: too many draws failed or resampling misconfigured."""


class ConfigError(FiscalIVError):
    """Invalid run configuration."""
