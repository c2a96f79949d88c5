"""Exception hierarchy."""


class GreyQueueError(Exception):
    """Base class for all errors raised by this package."""


class SingularFitError(GreyQueueError):
    """Design matrix is rank deficient or the fitted model is degenerate."""


class WindowTooSmallError(GreyQueueError, ValueError):
    pass


class NumericalDomainError(GreyQueueError, ArithmeticError):
    """A closed-form response hit a vanishing denominator."""


class DataError(GreyQueueError, ValueError):
    """Malformed input data; the message names the offending location."""


class UndefinedStatisticError(GreyQueueError, ValueError):
    """Statistic undefined for the input, e.g. correlations of a constant series."""
