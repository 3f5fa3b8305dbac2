"""Exception hierarchy.

The CLI maps these onto exit codes: ``ConfigError`` -> 2, ``DataError`` -> 3,
anything else -> 4.
"""


class LeadLagError(Exception):
    """Base class for all package errors."""


class ConfigError(LeadLagError):
    """Bad configuration file or command-line override."""


class DataError(LeadLagError):
    """Input data is missing, malformed or unusable."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(DataError):
    pass


class InvariantViolation(LeadLagError):
    """An internal accounting invariant was broken. Always a bug."""
