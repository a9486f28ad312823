"""Exception hierarchy.

Three roots decide the CLI exit code: :class:`InputError` (1),
:class:`ComputationError` (2) and :class:`EndpointError` (3).
"""


class EchoExplainError(Exception):
    """Base class for every error raised by this package."""


class InputError(EchoExplainError, ValueError):
    pass


class ComputationError(EchoExplainError, ValueError):
    pass


class EndpointError(EchoExplainError):
    pass


# -- parsing / input -------------------------------------------------------

class EmptyInput(InputError):
    pass


class MalformedRow(InputError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class SchemaError(InputError):
    pass


class BadMagic(InputError):
    pass


class TruncatedData(InputError):
    pass


class UnknownAttributeKey(InputError):
    pass


class RegistryMismatch(InputError):
    pass


class EmptyText(InputError):
    pass


class EmptyExemplars(InputError):
    pass


class EmptyTemplatePool(InputError):
    pass


# -- geometry / computation ------------------------------------------------

class InvariantViolation(ComputationError):
    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        msg = f"invariant violated: {invariant}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DegenerateContour(InvariantViolation):
    def __init__(self, detail: str = ""):
        super().__init__("contour has at least 3 boundary points and positive area", detail)


class SelfIntersecting(InvariantViolation):
    def __init__(self, detail: str = ""):
        super().__init__("contour is a simple polygon", detail)


class DegenerateAxis(ComputationError):
    pass


class NonPositiveWidth(ComputationError):
    pass


class NonPositiveEDV(ComputationError):
    pass


class Collinear(ComputationError):
    pass


class PointCountMismatch(ComputationError):
    pass


class InvalidSector(ComputationError):
    pass


class EmptySector(ComputationError):
    pass


class OutOfBounds(ComputationError):
    pass


class EmptyRegion(ComputationError):
    pass


class NoFinalAnswer(ComputationError):
    pass


class UnknownOption(ComputationError):
    pass


# -- endpoint ---------------------------------------------------------------

class OfflineMode(EndpointError):
    """Raised when a request is attempted without the online opt-in."""


class Timeout(EndpointError):
    pass


class HttpStatus(EndpointError):
    def __init__(self, code: int, body: str = ""):
        self.code = code
        self.body = body[:200]
        super().__init__(f"HTTP {code}: {self.body}")


class MalformedResponse(EndpointError):
    pass


class AuthMissing(EndpointError):
    pass
