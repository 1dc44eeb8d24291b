"""Exception hierarchy shared across the package."""


class GstamError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(GstamError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(GstamError, ValueError):
    """A precondition of an operation was violated."""


class NumericError(GstamError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class ConfigError(GstamError, ValueError):
    """Invalid configuration value."""


class IngestionError(GstamError, OSError):
    """A dataset file is missing or does not match its schema."""


class FormatError(IngestionError):
    """A dataset file is present but malformed."""


class ExportError(GstamError, OSError):
    """Writing an artifact to disk failed."""


class TrainingError(GstamError, ArithmeticError):
    """Training diverged (non-finite loss)."""


class MetricError(GstamError, ValueError):
    """A metric is undefined for the given inputs."""
