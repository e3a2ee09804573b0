"""Exception types shared across the package.

Validation problems subclass ``ValueError`` so callers can catch them
generically; the CLI maps them to exit code 2.
"""


class FbarLabError(Exception):
    """Base class for all package errors."""


class ValidationError(FbarLabError, ValueError):
    """Bad input: wrong shape, out of range, inconsistent alphabets."""


class InsufficientDataError(ValidationError):
    pass


class AlphabetMismatchError(ValidationError):
    pass


class CapExceededError(ValidationError):
    pass


class UseMonteCarloError(CapExceededError):
    """Exact transport would exceed the cost-matrix cap."""


class UseSamplerError(CapExceededError):
    """Exact cylinder enumeration would exceed the depth cap."""


class SubsequenceError(ValidationError):
    pass


class RoofMismatchError(ValidationError):
    pass


class LevelError(ValidationError):
    pass


class DisjointnessError(ValidationError):
    """A word collection contains a prefix pair."""


class ConfigError(ValidationError):
    pass


class WindowExhaustedError(FbarLabError):
    """A finite window ran out of symbols."""


class TailBudgetError(FbarLabError):
    """A tail violates the length budget."""


class TailSearchError(FbarLabError):
    """No admissible tail was found; ``best`` carries the closest candidate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class BudgetExhaustedError(FbarLabError):
    pass


class UncertifiedError(FbarLabError):
    pass


class MissingOutputsError(FbarLabError):
    pass


class ExperimentError(FbarLabError):
    pass
