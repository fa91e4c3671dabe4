"""Exception types raised by ottoforge."""


class InvalidInputError(ValueError):
    """Malformed or out-of-domain input (non-finite numbers, bad shapes, ...)."""


class NotApplicableError(ValueError):
    """An operation was requested outside the class of problems it covers."""


class NoLimitCycleError(RuntimeError):
    """The period map has no unique fixed point."""


class DegenerateCycleError(RuntimeError):
    """The time-weighted aggregate generator of a cycle is (numerically) singular."""


class NoFeasibleCycleError(RuntimeError):
    """No bath assignment admits a connected model."""


class OptimizationFailedError(RuntimeError):
    """A local solver failed to converge after all fallbacks."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []
