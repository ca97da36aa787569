"""Exception hierarchy shared by every singfit module."""

from __future__ import annotations


class SingfitError(Exception):
    """Base class for all errors raised by singfit."""


class DomainError(SingfitError, ValueError):
    """Input value outside the mathematical domain (e.g. non-positive price)."""


class ArgumentError(SingfitError, ValueError):
    """Invalid argument combination (bad window, too few points, ...)."""


class RangeError(SingfitError, OverflowError):
    """Result not representable as a finite float."""


class SingularityError(SingfitError, ArithmeticError):
    """Evaluation requested at or beyond the critical time t_c."""


class PoleError(SingfitError, ArithmeticError):
    """Denominator of the raw-price derived rate vanishes."""


class NoSingularityError(SingfitError, ValueError):
    """beta == 0: the linear-feedback regime has no critical time."""


class UnsupportedBranchError(SingfitError, ValueError):
    """beta >= 1 branch of the log-price solution is not implemented."""


class NoConvergenceError(SingfitError, RuntimeError):
    """Every start of a fit failed; ``best`` holds the least-bad attempt."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best
