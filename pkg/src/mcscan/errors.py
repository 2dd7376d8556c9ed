"""Exception and warning types shared across the package."""


class InputError(ValueError):
    """Malformed or non-finite input data."""


class DomainError(ValueError):
    """Index arguments outside the admissible range (e.g. a >= b)."""


class InfeasibleError(RuntimeError):
    """A constrained l1 problem has an empty feasible set.

    ``coordinate`` is the constraint row the solver could not satisfy, and
    ``row`` (when set) identifies which CLIME row problem failed.
    """

    def __init__(self, message, coordinate=None, row=None):
        super().__init__(message)
        self.coordinate = coordinate
        self.row = row


class StageError(RuntimeError):
    """Wraps a failure inside the inference pipeline with its location."""

    def __init__(self, message, stage, change_index=None):
        super().__init__(message)
        self.stage = stage
        self.change_index = change_index


class ConvergenceWarning(UserWarning):
    """Iterative solver stopped at its sweep limit."""
