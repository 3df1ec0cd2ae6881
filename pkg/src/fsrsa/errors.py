"""Exception hierarchy shared by all modules."""


class FsrsaError(Exception):
    """Base class for all package errors."""


class DomainError(FsrsaError, ValueError):
    pass


class ParameterizationError(FsrsaError, ValueError):
    pass


class FitError(FsrsaError):
    pass


class ModelError(FsrsaError):
    pass


class TransformError(FsrsaError, ValueError):
    """Raised when a point lies outside the support of the input model.

    ``row`` and ``coordinate`` locate the offending entry when known.
    """

    def __init__(self, message, row=None, coordinate=None):
        super().__init__(message)
        self.row = row
        self.coordinate = coordinate


class NumericError(FsrsaError, ArithmeticError):
    pass


class IntegrationError(FsrsaError, ArithmeticError):
    pass


class EstimationError(FsrsaError):
    pass


class NonConvergenceError(FsrsaError):
    pass


class BandwidthError(FsrsaError, ValueError):
    pass


class EvaluatorError(FsrsaError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ConfigError(FsrsaError, ValueError):
    pass
