"""Exception hierarchy shared across the package.

Validation-type failures (bad inputs, bad configuration, malformed files,
out-of-order requests) exit the CLI with status 1; any other failure is a
runtime error and exits with status 2.
"""


class DiagnosisError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(DiagnosisError):
    """Invalid input data, configuration, or request."""


class ParseError(ValidationError):
    """A file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataError(ValidationError):
    """A value violates a domain invariant."""


class NormalizationError(DataError):
    """A probability vector deviates too far from summing to one."""


class ConfigError(ValidationError):
    """An operation was configured with unusable parameters."""


class DimensionError(ValidationError):
    """Model and input dimensions do not agree."""


class CorruptModelError(ValidationError):
    """A serialized model or tree references unknown structure."""


class StateError(ValidationError):
    """A request arrived in the wrong session state."""


class DivergenceError(DiagnosisError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message=None):
        super().__init__(message or f"non-finite training loss at epoch {epoch}")
        self.epoch = epoch


class StageError(DiagnosisError):
    """A pipeline stage failed; wraps the underlying cause."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
