"""Exception types shared across the package."""


class InvalidParameter(ValueError):
    """A parameter is outside its validity range.

    ``field`` names the offending parameter so callers (and the CLI) can
    report it without parsing the message.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DimensionMismatch(ValueError):
    pass


class BranchCutError(ValueError):
    """Spectral parameter lies on (or within tolerance of) the ray [0, inf)."""


class SingularShift(ArithmeticError):
    """Shift is too close to the spectrum of the lattice Laplacian."""


class RangeError(ValueError):
    """Exponent or parameter outside the admissible window of an estimate."""


class ConvergenceFailure(RuntimeError):
    pass


class EmptyEvidence(Exception):
    """A sweep produced no accepted eigenvalues."""
