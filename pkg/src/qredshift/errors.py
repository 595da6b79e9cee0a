"""Exception hierarchy shared by every module."""


class QRedshiftError(Exception):
    """Base class for all errors raised by :mod:`qredshift`."""


class PositiveSupportError(QRedshiftError, ValueError):
    """Mode has non-negligible weight at or below zero frequency."""


class InvalidMode(QRedshiftError, ValueError):
    pass


class ZeroNorm(QRedshiftError, ValueError):
    pass


class NonFinite(QRedshiftError, ValueError):
    pass


class NegativeFrequency(QRedshiftError, ValueError):
    pass


class PhaseUndefined(QRedshiftError):
    """Magnitude drops below the phase-resolution floor inside the window."""


class QuadratureFailure(QRedshiftError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NonFiniteIntegrand(QuadratureFailure):
    pass


class OptimizationNotConverged(QRedshiftError):
    pass


class LinearDependence(QRedshiftError, ValueError):
    pass


class CompletionFailed(QRedshiftError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class BracketInvalid(QRedshiftError, ValueError):
    pass


class ConfigError(QRedshiftError):
    """Malformed configuration; ``line``/``column`` are 1-based when known."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)
