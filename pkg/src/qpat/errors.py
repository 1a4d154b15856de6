"""Exception hierarchy shared by all qpat modules."""


class QpatError(Exception):
    """Base class for all package errors."""


class ValidationError(QpatError):
    """An input violates a documented precondition (bad geometry, sign, shape, ...)."""


class GeometryMismatch(ValidationError):
    """Two fields/profiles that must share a grid geometry do not."""


class EmptyMask(ValidationError):
    """A mask that must select at least one node selects none."""


class UnsupportedDirection(ValidationError):
    """Beam direction is not an axis-aligned unit vector (only +/-e_k supported)."""


class BeamPairMismatch(ValidationError):
    """Two beams that must be exact opposites are not."""


class DisconnectedMask(ValidationError):
    """Path integration mask is not connected to the anchor node."""


class AnchorOutsideSupport(ValidationError):
    """Reference point for the quotient reconstruction lies outside the data support."""


class SolverFailure(QpatError):
    """Linear solver did not reach the required residual.

    Carries the achieved relative residual in ``residual``.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class EmptySupport(QpatError):
    """Pressure data vanish everywhere; the quotient formulas have no domain."""


class TransmissionRequired(QpatError):
    """The requested reconstruction needs transmission fluences that are absent."""


class DegenerateIlluminations(QpatError):
    """Quotient gradients fail to span the plane at every node."""


# --- grid file format -------------------------------------------------------

class GridFormatError(QpatError):
    """Base class for PAQG grid file errors."""


class BadMagic(GridFormatError):
    """File does not start with the PAQG magic bytes."""


class BadHeader(GridFormatError):
    """Header is truncated, malformed, or declares an unsupported version/dtype/order."""


class PayloadMismatch(GridFormatError):
    """Declared dims and actual payload byte count disagree."""


class NonFiniteValues(GridFormatError):
    """Payload contains NaN or infinite samples."""
