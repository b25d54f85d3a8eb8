"""Exception types raised by the solvers and the CLI."""


class DomainError(ValueError):
    """A point or measure lies outside [0, 1], or a field violates its assumptions."""


class ArgumentError(ValueError):
    """Invalid combination of arguments (e.g. m < n, mismatched configurations)."""


class NumericalError(RuntimeError):
    """Base class for failures of a numerical procedure."""


class LPError(NumericalError):
    """The linear program did not terminate with a verified optimum."""


class IterationLimitError(NumericalError):
    """A fixed-point iteration hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual
