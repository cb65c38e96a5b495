"""
Exception hierarchy shared by every pndlab module.

Validation-type errors map to exit code 1 / HTTP 400, numerical failures to
exit code 2 / HTTP 422.
"""


class PndLabError(Exception):
    pass


class DomainError(PndLabError, ValueError):
    """A parameter lies outside the range an operation accepts."""


class StepSizeError(DomainError):
    pass


class ShapeMismatchError(DomainError):
    pass


class ConfigError(PndLabError):
    """Missing input file, unreadable config, or an invalid flag combination."""


class NumericalError(PndLabError, ArithmeticError):
    pass


class NumericalGuardError(NumericalError):
    """Model probability vanished where the data is nonzero."""


class TruncationError(NumericalError):
    """Population reached the top of the truncated Fock space."""


class UnconvergedTailError(NumericalError):
    pass


class UndefinedRatioError(NumericalError):
    """Ratio with a vanishing denominator (vacuum input)."""


def error_payload(exc: Exception, command: str = "") -> dict:
    """Machine-readable error body used by the CLI and the API."""
    payload = {"error": type(exc).__name__, "detail": str(exc)}
    if command:
        payload["command"] = command
    return payload


def exit_code_for(exc: Exception) -> int:
    if isinstance(exc, NumericalError):
        return 2
    return 1
