"""Exception hierarchy.

Three families map onto CLI exit codes: bad input (2), numeric trouble (3)
and inputs that sit outside the regime the rigidity construction is valid
for (4).
"""


class VarifoldError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code}


class InputError(VarifoldError, ValueError):
    exit_code = 2


class NumericError(VarifoldError, ArithmeticError):
    exit_code = 3


class HypothesisAbort(VarifoldError):
    """Raised when an input violates a standing assumption of a construction.

    These are expected outcomes for extremal inputs, not bugs.
    """

    exit_code = 4


# input / configuration
class DegenerateFace(InputError):
    pass


class InvalidIndex(InputError):
    pass


class NonPositiveMultiplicity(InputError):
    pass


class NotClosed(InputError):
    pass


class InvalidSpec(InputError):
    pass


class NoReference(InputError):
    pass


class GridTooSmall(InputError):
    pass


class ZeroDirection(InputError):
    pass


class ExcisionTooLarge(InputError):
    pass


class PoleOnMesh(InputError):
    pass


# numeric
class NumericFailure(NumericError):
    pass


class SolverDiverged(NumericError):
    pass


class DegenerateFit(NumericError):
    pass


class LiYauViolation(NumericError):
    pass


# out of hypothesis
class HypothesisViolated(HypothesisAbort):
    pass


class PlaneThroughPole(HypothesisAbort):
    pass


class CoverageGap(HypothesisAbort):
    pass


class RadiusBelowResolution(UserWarning):
    """Warning: smallest probe radius is under twice the local edge length."""
