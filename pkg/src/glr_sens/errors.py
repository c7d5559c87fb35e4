"""Exception hierarchy shared by every module."""

from __future__ import annotations


class GLRError(Exception):
    """Base class. ``index`` is the offending row of a batched evaluation, if known."""

    def __init__(self, message: str = "", index: int | None = None):
        super().__init__(message)
        self.index = index


class DimensionMismatch(GLRError, ValueError):
    pass


class NonFiniteValue(GLRError, ArithmeticError):
    pass


class SingularJacobian(GLRError, ArithmeticError):
    pass


class ZeroDensity(GLRError, ArithmeticError):
    pass


class BoundaryPoint(GLRError, ValueError):
    """Raised when a weight needing a two-sided stencil is asked for on the boundary."""


class SmoothnessViolation(GLRError, ValueError):
    pass


class MissingFaceDraw(GLRError, KeyError):
    pass


class UnsupportedSupport(GLRError, ValueError):
    pass


class NoConditionalSampler(GLRError, ValueError):
    pass


class InvalidRate(GLRError, ValueError):
    pass


class InfiniteBound(GLRError, ValueError):
    pass


class EmptyInput(GLRError, ValueError):
    pass


class DimensionTooLarge(GLRError, ValueError):
    pass


class Nonconvergence(GLRError, ArithmeticError):
    pass


class RootFindFailure(GLRError, ArithmeticError):
    pass


class ReplicationError(GLRError):
    """A per-sample failure inside a replicated estimate."""

    def __init__(self, replication: int, cause: Exception):
        super().__init__(f"replication {replication}: {cause}", index=replication)
        self.replication = replication
        self.cause = cause
