"""Shared exception types."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class ConfigurationError(ValueError):
    """Invalid run or law configuration."""


class FormatError(ValueError):
    """Malformed on-disk file; message names the offending line."""


class TruncationError(RuntimeError):
    """Absorbing-boundary mass loss exceeded the configured budget."""


class SolverError(RuntimeError):
    """A solver failed to reach its residual tolerance."""


class ExperimentAbort(RuntimeError):
    """An experiment could not produce a meaningful result."""
