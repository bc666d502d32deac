"""Exception types.

Everything raised on purpose derives from :class:`TwistopError`.
:class:`Refusal` marks inputs that violate a standing assumption of the
theory (no spectral gap, zero variance); the command line maps those to
exit code 2 instead of 1.
"""


class TwistopError(Exception):
    pass


class Refusal(TwistopError):
    """The computation is well defined but its hypotheses fail."""


# map model
class BoundaryPoint(TwistopError):
    pass


class SingularBranch(TwistopError):
    pass


class ExpansionViolation(TwistopError):
    pass


class InvalidBranch(TwistopError):
    pass


class GridMismatch(TwistopError):
    pass


# ulam assembly
class NonAffineExact(TwistopError):
    pass


class EmptyPartition(TwistopError):
    pass


class DimensionMismatch(TwistopError):
    pass


# spectral
class NoConvergence(TwistopError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class ZeroIterate(TwistopError):
    pass


class EigenvalueNotOne(TwistopError):
    pass


class NotCentered(TwistopError):
    pass


class NonSummable(TwistopError):
    pass


class NotMixing(Refusal):
    pass


# large deviations
class ZeroVariance(Refusal):
    pass


class WindowCollapse(TwistopError):
    pass


class WindowTooNarrow(TwistopError):
    pass


class NonConvexCurve(TwistopError):
    pass


class ComplexEigenFailure(TwistopError):
    pass


# configuration / reporting
class SchemaError(TwistopError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class UnknownMap(TwistopError):
    pass


class EpsilonMismatch(TwistopError):
    pass
