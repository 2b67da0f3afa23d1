"""Exception hierarchy shared by every module of the package."""


class FKError(Exception):
    """Base class for all package errors."""


class ConfigError(FKError, ValueError):
    """Invalid process, measure, mesh or run configuration."""


class NumericError(FKError, ArithmeticError):
    """A non-finite value showed up during simulation or evaluation."""


class DivergenceError(NumericError):
    """The fixed-point iteration left the a-priori envelope.

    The partially filled report is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
