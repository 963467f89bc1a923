"""Exceptions shared across the package."""

from __future__ import annotations


class MultivoxError(Exception):
    """Base class for every error this package raises on purpose."""


class ValidationError(MultivoxError):
    """Invalid input, configuration, or file content, detected before work starts."""


class CoverageError(ValidationError):
    """Evaluation inputs do not cover the required utterances."""

    def __init__(self, missing, message: str | None = None):
        self.missing = sorted(missing)
        shown = ", ".join(str(m) for m in self.missing[:10])
        if len(self.missing) > 10:
            shown += f", ... ({len(self.missing)} total)"
        super().__init__(message or f"missing required outputs: {shown}")


class UndefinedMetricError(MultivoxError):
    """The metric has no defined value for these inputs.

    Deliberately distinct from any numeric result so callers cannot confuse
    "undefined" with 0.0 or NaN arithmetic.
    """


class TrainingDivergedError(MultivoxError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch}: loss = {loss}")
