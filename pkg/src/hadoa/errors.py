"""Exception hierarchy shared by all hadoa modules."""


class HadoaError(Exception):
    """Base class for every error raised by this package."""


class DomainError(HadoaError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(HadoaError, ValueError):
    """A combiner, plan or experiment configuration violates a constraint."""


class IdentifiabilityError(HadoaError):
    """The stacked measurement operator cannot identify the unknown covariance.

    Attributes:
        numerical_rank: rank of the stacked operator.
        required_rank: rank needed for a unique solution.
        condition_estimate: ratio of largest to smallest singular value.
    """

    def __init__(self, message, numerical_rank, required_rank, condition_estimate):
        super().__init__(message)
        self.numerical_rank = numerical_rank
        self.required_rank = required_rank
        self.condition_estimate = condition_estimate


class PeakDeficitError(HadoaError):
    """The spectrum has fewer local maxima than the requested source count."""

    def __init__(self, message, found, requested):
        super().__init__(message)
        self.found = found
        self.requested = requested


class ScanUnderrunError(HadoaError):
    """A snapshot source ran out of slots before a scan finished."""
