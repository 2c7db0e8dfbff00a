from typing import Optional


class QFluctError(Exception):
    """Base class for every error raised by qfluct."""


class LinalgError(QFluctError, ValueError):
    pass


class NotHermitian(LinalgError):
    pass


class NotSquare(LinalgError):
    pass


class DimensionMismatch(LinalgError):
    pass


class StateError(QFluctError, ValueError):
    pass


class TraceNotOne(StateError):
    pass


class NegativeEigenvalue(StateError):
    pass


class NonFiniteBeta(StateError):
    pass


class BadRank(StateError):
    pass


class ProtocolError(QFluctError, ValueError):
    pass


class NotUnitary(ProtocolError):
    pass


class SupportEmpty(ProtocolError):
    pass


class OffSupport(ProtocolError):
    pass


class AssumptionViolated(QFluctError, ValueError):
    pass


class ConfigInvalid(QFluctError, ValueError):
    pass


class CheckFailed(QFluctError):
    """A theorem or invariant check exceeded its tolerance."""

    def __init__(self, check: str, residual: float, tolerance: Optional[float] = None):
        self.check = check
        self.residual = residual
        self.tolerance = tolerance
        detail = f"check '{check}' failed with residual {residual:.3e}"
        if tolerance is not None:
            detail += f" (tolerance {tolerance:.1e})"
        super().__init__(detail)
