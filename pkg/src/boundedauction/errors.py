"""Exception types raised across the package."""


class DegenerateIntervalError(ValueError):
    """An interval carries zero probability mass."""


class UnsupportedPointError(ValueError):
    """The density vanishes where a positive density is required."""


class NotRegularError(ValueError):
    """A virtual-valuation transform is not strictly increasing."""


class SolverError(RuntimeError):
    """A fixed-point or root search failed to converge."""

    def __init__(self, message, best_residual=float("nan")):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class DegeneracyError(SolverError):
    """A formula hit a zero denominator the characterization does not cover."""

    def __init__(self, message):
        super().__init__(message, float("nan"))


class CharacterizationOpenError(ValueError):
    """No optimal-mechanism characterization exists for the requested (n, k)."""


class StructuralError(ValueError):
    """A mechanism or tree violates a structural assumption."""


class CertificationError(AssertionError):
    """Exhaustive search found a better mechanism than the claimed optimum."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate
