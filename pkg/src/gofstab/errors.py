"""Exception hierarchy shared by every module."""


class GofError(Exception):
    """Base class for all errors raised by gofstab."""


class DomainError(GofError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateObservationError(DomainError):
    """A probability-integral-transformed value sits exactly on 0 or 1."""


class ValidityError(GofError, ValueError):
    """(n, p, alpha) lies outside the range a stabilizing form was fitted on."""


class KindMismatchError(GofError, ValueError):
    pass


class TableMissError(GofError, KeyError):
    """A critical table has no entry for the requested key."""

    def __init__(self, kind, p, alpha):
        self.key = (kind, p, alpha)
        super().__init__(f"table miss: kind={kind} p={p} alpha={alpha}")

    def __str__(self):
        return self.args[0]


class DataError(GofError, ValueError):
    pass


class BoundaryError(GofError, ValueError):
    pass


class ConfigurationError(GofError, ValueError):
    pass


class SingularFitError(GofError, ValueError):
    """Weighted design matrix is rank deficient."""

    def __init__(self, message, predictors=()):
        self.predictors = tuple(predictors)
        super().__init__(message)


class InsufficientDataError(GofError, ValueError):
    pass


class ValidityWarning(UserWarning):
    """Emitted when a form is evaluated outside its fitted range in relaxed mode."""
