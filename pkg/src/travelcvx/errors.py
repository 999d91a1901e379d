"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class TravelCvxError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TravelCvxError, ValueError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class NumericalError(TravelCvxError, ArithmeticError):
    """A numerical step failed or a guarded invariant was violated (exit code 3)."""


class BasisError(NumericalError):
    pass


class AdmissibilityError(NumericalError):
    """Phantom violates positivity, monotonicity or the layer condition."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class EikonalError(NumericalError):
    pass


class InfeasibleError(NumericalError):
    """Coefficient field outside the admissible set B(R, q, d)."""

    def __init__(self, message, index=None, margin=None):
        super().__init__(message)
        self.index = index
        self.margin = margin


class DivergenceError(NumericalError):
    """Gradient projection iteration failed to decrease the functional."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
