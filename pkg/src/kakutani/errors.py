"""Exception hierarchy shared by every module."""

from __future__ import annotations


class KakutaniError(Exception):
    """Base class for all errors raised by this package."""


class LengthMismatch(KakutaniError, ValueError):
    pass


class EmptyInput(KakutaniError, ValueError):
    pass


class BackendCapacityExceeded(KakutaniError, ValueError):
    pass


class WindowOutOfBounds(KakutaniError, IndexError):
    pass


class HypothesisUnverifiable(KakutaniError):
    pass


class NoNodeAtLevel(KakutaniError, ValueError):
    pass


class LevelOrderViolation(KakutaniError, ValueError):
    pass


class ClassOutOfRange(KakutaniError, IndexError):
    pass


class HypothesisViolated(KakutaniError):
    """A stated hypothesis of a construction fails; ``witness`` explains where."""

    def __init__(self, message: str, witness: object = None):
        super().__init__(message)
        self.witness = witness


class ParseFailure(KakutaniError, ValueError):
    pass


class NoValidParse(KakutaniError, ValueError):
    pass


class InputTooShort(KakutaniError, ValueError):
    pass


class PatternTooLarge(KakutaniError, ValueError):
    pass


class BadIndex(KakutaniError, IndexError):
    pass


class WindowTooShort(KakutaniError, ValueError):
    pass


class ShapeMismatch(KakutaniError, ValueError):
    pass


class InvariantViolation(KakutaniError):
    pass


class OrbitClosureFailure(KakutaniError):
    pass


class DivisibilityViolation(KakutaniError, ValueError):
    pass


class FaithfulInfeasible(KakutaniError):
    """Faithful parameters exist but are far beyond what can be materialised."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


class SpecViolation(KakutaniError):
    def __init__(self, message: str, witness: object = None):
        super().__init__(message)
        self.witness = witness


class LedgerInconsistent(KakutaniError):
    pass


class NonInvertible(KakutaniError, ArithmeticError):
    pass


class CoefficientMismatch(KakutaniError, ValueError):
    pass


class MalformedCircularWord(KakutaniError, ValueError):
    pass


class ConfigInvalid(KakutaniError, ValueError):
    pass


class BaselineMissing(KakutaniError):
    pass


class BaselineMismatch(KakutaniError):
    def __init__(self, message: str, diff: dict | list | None = None):
        super().__init__(message)
        self.diff = diff or []
