"""Exception types shared across the package."""


class VarstateError(Exception):
    """Base class for all package errors."""


class StructureError(VarstateError):
    """Invalid structure parameters, or a structure impossible for (k, m)."""


class DataError(VarstateError):
    """Malformed or inconsistent input data (shapes, parsing, sample counts)."""


class RankDeficiencyError(VarstateError):
    """A matrix that must have full rank is numerically rank deficient."""

    def __init__(self, message, rank=None, required=None):
        super().__init__(message)
        self.rank = rank
        self.required = required


class SingularMomentError(VarstateError):
    """A Gram matrix that must be invertible is singular (no silent ridge)."""


class LikelihoodDomainError(VarstateError):
    """The concentrated objective is -inf (numerator Gram matrix singular).

    Raised instead of returning NaN so optimizers receive an explicit
    signal when an iterate interpolates the data.
    """
