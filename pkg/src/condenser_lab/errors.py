"""Exception hierarchy with machine-readable codes.

Every error raised by the library derives from :class:`CondenserError` and
carries a short ``code`` string that the CLI copies into ``report.json``.
"""
from __future__ import annotations


class CondenserError(Exception):
    """Base class; ``code`` is stable and machine-readable."""

    code = "error"

    def __init__(self, message: str, *, code: str | None = None, data: dict | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.data = dict(data or {})


class InputError(CondenserError, ValueError):
    code = "input_error"


class InfeasibleConstraintError(InputError):
    code = "infeasible_constraint"


class CarrierError(InputError):
    """A measure has atoms outside the set that should carry it."""

    code = "carrier_error"


class DomainError(InputError):
    code = "domain_error"


class GeometryError(CondenserError):
    code = "geometry_error"


class SingularEvaluationError(CondenserError, ArithmeticError):
    code = "singular_evaluation"


class PreconditionError(CondenserError):
    code = "precondition_error"


class ConditioningError(CondenserError):
    code = "conditioning_error"


class SolverError(CondenserError):
    """Iterative solver did not converge; ``data`` holds the residuals reached."""

    code = "non_convergence"


class ConstructionError(CondenserError):
    code = "construction_error"
