"""Exception types raised across the package."""


class BlochTomoError(Exception):
    """Base class for all package errors."""


class ValidationError(BlochTomoError, ValueError):
    """An input object violates its documented invariants."""


class DegenerateInputError(BlochTomoError, ValueError):
    """Inputs are (numerically) linearly dependent."""


class UnreachablePurityError(BlochTomoError, ValueError):
    """A generator cannot reach the requested purity."""


class SingularParameterError(BlochTomoError, ValueError):
    """Drive parameters make the inverse map undefined."""


class HarmonicOverflowError(BlochTomoError, ArithmeticError):
    """A harmonic product produced components outside the allowed order."""


class ProbabilityError(BlochTomoError, ValueError):
    """Outcome probabilities are negative or do not sum to one."""


class DegenerateFrequenciesError(BlochTomoError, ValueError):
    """Frequencies admit a vanishing nonzero integer combination."""
