"""Typed failures raised by the toolkit.

Every error carries a stable ``kind`` string and the exit code the command
line maps it to, so callers can branch on failures without parsing text.
"""

from __future__ import annotations

from typing import Any


class BicError(Exception):
    """Base class for all toolkit failures."""

    kind = "error"
    exit_code = 3

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        return {"error": self.kind, "message": self.message, "details": self.details}


class InvalidParameter(BicError):
    kind = "invalid-parameter"
    exit_code = 2


class DimensionMismatch(BicError):
    kind = "dimension-mismatch"
    exit_code = 2


class ConfigInvalid(BicError):
    kind = "config-invalid"
    exit_code = 2


class CutoffDegenerate(BicError):
    kind = "cutoff-degenerate"


class SingularAssembly(BicError):
    kind = "singular-assembly"


class NearSingularSystem(BicError):
    kind = "near-singular-system"


class MismatchedGrids(BicError):
    kind = "mismatched-grids"


class NoConvergence(BicError):
    kind = "no-convergence"


class BranchCrossing(BicError):
    kind = "branch-crossing"


class RealizationFailure(BicError):
    kind = "realization-failure"


class UnderResolved(BicError):
    kind = "under-resolved"
    exit_code = 4


class ZeroCrossing(BicError):
    kind = "zero-crossing"
    exit_code = 4


class LostIndex(BicError):
    kind = "lost-index"
    exit_code = 4


class NotABic(BicError):
    kind = "not-a-bic"
    exit_code = 5


class InadmissibleM(BicError):
    kind = "inadmissible-M"
    exit_code = 3


class DegenerateDenominator(BicError):
    kind = "degenerate-denominator"
    exit_code = 3
