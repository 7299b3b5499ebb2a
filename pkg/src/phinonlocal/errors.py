"""Exception hierarchy shared by all modules."""


class PhiNonlocalError(Exception):
    """Base class for every error raised by the package."""


class NonFiniteValue(PhiNonlocalError, ArithmeticError):
    pass


class QuadratureFailure(PhiNonlocalError):
    pass


class ExponentDeclarationInvalid(PhiNonlocalError, ValueError):
    pass


class InvalidMeshSpec(PhiNonlocalError, ValueError):
    pass


class BracketFailure(PhiNonlocalError):
    pass


class NewtonDivergence(PhiNonlocalError):
    pass


class PreconditionUnmet(PhiNonlocalError):
    pass


class HypothesisViolation(PhiNonlocalError, ValueError):
    """Exponent conditions of an existence theorem do not hold."""


class InvalidParams(PhiNonlocalError, ValueError):
    pass


class KSelectionFailure(PhiNonlocalError):
    pass


class LambdaSearchFailure(PhiNonlocalError):
    pass


class OrderingViolation(PhiNonlocalError):
    pass


class DegenerateThreshold(PhiNonlocalError):
    pass


class CertificationFailure(PhiNonlocalError):
    """A defining sub/supersolution inequality fails at some node.

    ``node`` and ``margin`` locate the worst offender when known.
    """

    def __init__(self, message, node=None, margin=None):
        super().__init__(message)
        self.node = node
        self.margin = margin


class IterationFailure(PhiNonlocalError):
    def __init__(self, message, node=None, magnitude=None, trace=None):
        super().__init__(message)
        self.node = node
        self.magnitude = magnitude
        self.trace = trace


class SandwichViolation(IterationFailure):
    pass


class MonotonicityViolation(IterationFailure):
    pass


class MaxStepsExceeded(IterationFailure):
    pass


class ConfigError(PhiNonlocalError, ValueError):
    pass
