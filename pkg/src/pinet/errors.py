"""Exception hierarchy shared by every pinet module."""


class PinetError(Exception):
    """Base class for all pinet errors."""


class DomainError(PinetError, ValueError):
    """An argument lies outside the domain of the operation."""


class ShapeError(PinetError, ValueError):
    """Array dimensions do not match."""


class NumericError(PinetError, FloatingPointError):
    """A non-finite value appeared in a computation."""


class TrainingError(NumericError):
    """Training diverged (non-finite loss or parameters)."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ConfigError(PinetError, ValueError):
    """Invalid experiment or calibration configuration."""


class FormatError(PinetError, ValueError):
    """A serialized artifact is malformed or has an unsupported version."""


class DataError(PinetError, ValueError):
    """Input data could not be parsed."""


class StageError(PinetError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage, config_hash, cause, replicate=None):
        where = f"stage '{stage}'"
        if replicate is not None:
            where += f" (replicate {replicate})"
        super().__init__(f"{where} failed [config {config_hash}]: {cause}")
        self.stage = stage
        self.config_hash = config_hash
        self.replicate = replicate
        self.cause = cause
