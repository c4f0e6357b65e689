"""Exception hierarchy shared by the solver modules."""

from __future__ import annotations


class DryMepError(Exception):
    """Base class for all package errors."""


class ConfigError(DryMepError):
    """Invalid or inconsistent configuration."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ModelError(DryMepError):
    """The process model could not be evaluated."""


class NonPositiveRate(ModelError):
    pass


class InvalidEquilibrium(ModelError):
    pass


class BelowEquilibrium(ModelError):
    pass


class StageError(ModelError):
    """A kinetics failure tagged with the stage it happened in."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage}: {cause}")


class SpaceTooLarge(DryMepError):
    pass


class NumericalFailure(DryMepError):
    pass


class NotConverged(DryMepError):
    """Raised by the annealer when the outer loop hits its iteration cap.

    The partial result is kept on ``result``.
    """

    def __init__(self, result, message="annealing did not reach p_max"):
        self.result = result
        super().__init__(message)
