"""Exception types shared across the package."""


class QpfkError(Exception):
    """Base class for all package errors."""


class HermitianSymmetryError(QpfkError):
    """Coefficients do not satisfy c(-k) = conj(c(k))."""


class ResolutionError(QpfkError):
    """Unsupported or mismatched grid resolution."""


class NearResonanceError(QpfkError):
    """Frequency vector is numerically resonant at the requested exponent."""


class SolvabilityError(QpfkError):
    """Right-hand side of a difference equation has a nonzero average."""


class SmallDivisorError(QpfkError):
    """A Fourier divisor fell below the numerical floor.

    Carries the offending lattice index in ``k``.
    """

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = tuple(k) if k is not None else None


class DegenerateConjugacyError(QpfkError):
    """The hull-function derivative factor vanishes (monotonicity lost)."""


class BracketError(QpfkError):
    """Invalid bracket for a breakdown bisection."""


class SeedFailureError(QpfkError):
    """First point of a continuation ramp could not be solved."""


class ConfigError(QpfkError):
    """Invalid run configuration.

    ``field`` names the offending entry when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
