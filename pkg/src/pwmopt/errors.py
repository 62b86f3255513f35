"""Exception types raised by the pwmopt package."""


class PwmOptError(Exception):
    """Base class for all pwmopt errors."""


class DomainError(PwmOptError, ValueError):
    """An input value is outside its mathematical domain (non-positive, wrong parity, ...)."""


class PatternError(PwmOptError, ValueError):
    """A switching pattern or pulse count is structurally invalid."""


class ModulationRangeError(PwmOptError, ValueError):
    """Requested fundamental amplitude is not realizable with the given bus voltage."""


class InfeasiblePatternError(PwmOptError, ValueError):
    """A free-parameter vector expands to a non-monotone instant sequence."""

    def __init__(self, message, first_violation=None):
        super().__init__(message)
        self.first_violation = first_violation


class SeedError(PwmOptError, ValueError):
    """An optimizer seed (or raw edge list to project) is unusable."""


class UndefinedThdError(PwmOptError, ZeroDivisionError):
    """THD is undefined because the fundamental amplitude is zero."""


class SolverError(PwmOptError, RuntimeError):
    """Internal solver failure (QP subproblem did not settle)."""
