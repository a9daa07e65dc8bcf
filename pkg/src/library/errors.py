"""Exception hierarchy.

Every error raised by the library derives from `HorizonLabError` and from a
builtin exception class, so callers can catch either.
"""

import typing as T


class HorizonLabError(Exception):
    pass


# ============== expressions and jets ==============


class ExpressionSyntaxError(HorizonLabError, ValueError):
    def __init__(self, message: str, position: int, expected: T.Sequence[str] = ()):
        self.position = position
        self.expected = tuple(expected)
        detail = f" (expected one of: {', '.join(self.expected)})" if expected else ""
        super().__init__(f"{message} at offset {position}{detail}")


class UnknownIdentifierError(HorizonLabError, ValueError):
    def __init__(self, name: str, position: int):
        self.name = name
        self.position = position
        super().__init__(f"Unknown identifier {name!r} at offset {position}")


class UnboundNameError(HorizonLabError, ValueError):
    pass


class DomainError(HorizonLabError, ArithmeticError):
    def __init__(self, message: str, node: str | None = None, point: T.Any = None):
        self.reason = message
        self.node = node
        self.point = point
        text = message
        if node is not None:
            text += f" in node {node}"
        if point is not None:
            text += f" at point {point}"
        super().__init__(text)


class JetOrderError(HorizonLabError, ValueError):
    pass


# ============== geometry ==============


class ChartDomainError(HorizonLabError, ValueError):
    pass


class SingularMetricError(HorizonLabError, ValueError):
    pass


class SignatureError(HorizonLabError, ValueError):
    pass


class VanishingVectorError(HorizonLabError, ValueError):
    pass


class NotPositiveDefiniteError(HorizonLabError, ValueError):
    pass


# ============== initial data and catalog ==============


class ConstraintError(HorizonLabError, ValueError):
    pass


class ParameterError(HorizonLabError, ValueError):
    pass


class InputFileError(HorizonLabError, ValueError):
    pass


# ============== foliation and expansion ==============


class HorizonError(HorizonLabError, ValueError):
    pass


class TransversalError(HorizonLabError, ValueError):
    pass


class IntegrationError(HorizonLabError, RuntimeError):
    pass


class ChartExitError(IntegrationError):
    pass


class StepSizeError(IntegrationError):
    pass


class NonFiniteStateError(IntegrationError):
    pass


class ExtrapolationError(HorizonLabError, ValueError):
    pass


class InsufficientSamplesError(HorizonLabError, ValueError):
    pass


class FrameMismatchError(HorizonLabError, ValueError):
    pass
