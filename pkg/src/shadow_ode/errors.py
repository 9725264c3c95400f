"""Exception hierarchy shared by every module of the package."""


class ShadowOdeError(Exception):
    """Base class for all package errors."""


class ExpressionError(ShadowOdeError, ValueError):
    """Problems detected while parsing an expression."""


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(expected)
        detail = f"{message} at byte {offset}"
        if self.expected:
            detail += f" (expected {', '.join(self.expected)})"
        super().__init__(detail)


class UnknownIdentifier(ExpressionError):
    def __init__(self, name, offset):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier {name!r} at byte {offset}")


class ArityMismatch(ExpressionError):
    def __init__(self, name, expected, got, offset):
        self.name = name
        self.offset = offset
        super().__init__(
            f"{name}() takes {expected} argument(s), got {got} at byte {offset}"
        )


class DimensionMismatch(ExpressionError):
    def __init__(self, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"expected {expected} component(s), got {got}")


class NumericalFailure(ShadowOdeError):
    """Failures of a numerical procedure to certify its result."""


class DomainError(ShadowOdeError, ArithmeticError):
    """A function was evaluated outside of its real domain."""

    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = f"{message} (index {index})"
        super().__init__(message)


class NoConvergence(NumericalFailure):
    pass


class InsufficientLadder(NumericalFailure):
    pass


class OriginDiverged(NumericalFailure):
    pass


class TooFewSamples(NumericalFailure):
    pass


class NoMeanValuePoint(NumericalFailure):
    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class SystemsUnsupported(ShadowOdeError):
    pass


class LadderNonMonotone(NumericalFailure):
    def __init__(self, message, level=None, query=None, gap=None):
        self.level = level
        self.query = query
        self.gap = gap
        super().__init__(message)
