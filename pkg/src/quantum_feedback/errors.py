"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operand shapes or subsystem indices do not agree."""


class ValidationError(ValueError):
    """A value violates a type invariant (Hermiticity, unit trace, ...)."""


class ClosureNotConverged(RuntimeError):
    """Lie closure hit ``max_generations`` while still growing.

    The partial report is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ProtocolError(ValueError):
    """Malformed protocol (bad branch reference, illegal step for the executor)."""


class BranchCapExceeded(RuntimeError):
    """Enumeration produced more trajectories than ``branch_cap``."""


class MixedStateError(ValueError):
    """An operation that needs a globally pure state received a mixed one."""
