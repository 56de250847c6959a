"""Exception types shared across the package."""


class SonrebError(Exception):
    """Base class for all package errors."""


class SchemaError(SonrebError, KeyError):
    """A required column is missing or unknown."""

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"missing or unknown column: {column}")

    def __str__(self):
        return self.args[0]


class ParseError(SonrebError, ValueError):
    """A CSV cell could not be read as a finite number."""

    def __init__(self, message, row=None):
        self.row = row
        super().__init__(message)


class DomainError(SonrebError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateInputError(DomainError):
    """A vector has zero variance where a correlation is required."""


class SingularDesignError(SonrebError, ValueError):
    """A least-squares design matrix is rank deficient."""

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"design matrix is rank deficient at column {column!r}")


class EncodingError(SonrebError, ValueError):
    """A GEP gene violates the head/tail discipline."""


class ConfigError(SonrebError, ValueError):
    """Invalid configuration values."""


class PipelineError(SonrebError):
    """An error raised inside a pipeline stage, tagged with where it happened."""

    def __init__(self, stage, module, cause):
        self.stage = stage
        self.module = module
        self.cause = cause
        super().__init__(f"[{module}:{stage}] {type(cause).__name__}: {cause}")
