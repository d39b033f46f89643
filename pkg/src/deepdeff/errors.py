"""Exception types shared across the package."""


class DeepDeffError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(DeepDeffError, ValueError):
    """Operands have incompatible shapes; the message names both shapes."""


class ConfigError(DeepDeffError, ValueError):
    """Invalid configuration value (rate, split spec, resample ratio...)."""


class InputError(DeepDeffError, ValueError):
    """Input data unusable: empty sequence, series too short, etc."""


class HistoryError(DeepDeffError, ValueError):
    """Not enough (or gapped) history to compute a windowed statistic."""


class EncodingError(DeepDeffError, ValueError):
    """Categorical index out of range for its one-hot block."""


class ParseError(DeepDeffError, ValueError):
    """A raw data file could not be parsed; carries the offending line."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class FormatError(DeepDeffError, ValueError):
    """A weights or cache file is corrupt, truncated, or version-mismatched."""


class TrainingError(DeepDeffError, RuntimeError):
    """Training diverged (non-finite loss); carries the epoch it happened at."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class RunError(DeepDeffError, RuntimeError):
    """An experiment run could not produce any result."""
