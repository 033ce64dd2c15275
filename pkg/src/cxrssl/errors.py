"""Exception hierarchy shared across the toolkit.

The CLI maps these onto its exit-code contract: ConfigError -> 2,
ArtifactError -> 3, NumericError -> 4.
"""


class CxrsslError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(CxrsslError):
    """Invalid configuration, bad user input, or missing input files."""


class DimensionError(CxrsslError):
    """Tensor shape or grid-divisibility violation."""


class ArtifactError(CxrsslError):
    """Corrupt, incompatible, or missing run artifacts (checkpoints, reports)."""


class NumericError(CxrsslError):
    """Non-finite values or otherwise failed numerics during training."""


class NonFiniteLossError(NumericError):
    """A training step produced a non-finite loss; the step was aborted and
    the model state left untouched."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UndefinedMetricError(CxrsslError):
    """Metric is mathematically undefined for the given inputs."""
