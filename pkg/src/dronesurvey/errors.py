"""Exception hierarchy shared by all modules.

The CLI maps these onto its exit-code contract: ValidationError (and
subclasses) -> 2, PlanningImpossibleError -> 3, NumericError (and
subclasses) -> 4.
"""

from __future__ import annotations


class DroneSurveyError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DroneSurveyError):
    """Invalid input data, file, or configuration."""


class ConfigError(ValidationError):
    """Bad or incomplete configuration (unknown strategy tag, missing key, ...)."""


class DegenerateInputError(ValidationError):
    """Structurally valid input that makes the requested computation meaningless
    (empty transect list, zero total area, ...)."""


class PlanningImpossibleError(DroneSurveyError):
    """Survey planning cannot start (no snappable launch point, empty grid, ...)."""


class NumericError(DroneSurveyError):
    """Numerical or model failure (non-convergence, undefined p-value, ...)."""


class NonConvergenceError(NumericError):
    """Optimizer failed to converge; carries the best log-likelihood found."""

    def __init__(self, message: str, best_loglik: float | None = None):
        super().__init__(message)
        self.best_loglik = best_loglik
