"""Exception hierarchy shared by all harmocont modules."""


class HarmocontError(Exception):
    """Base class for every error raised by harmocont."""


class ContractError(HarmocontError, ValueError):
    """An argument violates an operation's preconditions (shape, range)."""


class ConfigurationError(HarmocontError, ValueError):
    """A continuation problem or run configuration is inconsistent."""


class ParameterDomainError(ContractError):
    """A model parameter lies outside the domain where the model is defined."""


class NumericalError(HarmocontError, ArithmeticError):
    """A numerical procedure failed."""


class SingularMatrixError(NumericalError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InvalidStartError(ConvergenceError):
    """Newton failed on the very first point of a branch."""


class LocalizationError(NumericalError):
    """A bracketed bifurcation could not be refined."""


class StarterError(NumericalError):
    """The periodic-orbit starter at a Hopf point did not converge."""


class DegenerateRatioError(NumericalError):
    """A harmonic amplitude used as a denominator (or under a root) vanished."""


class ExportError(HarmocontError):
    """Chart export could not be carried out."""
