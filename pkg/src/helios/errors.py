"""Exception types shared across the toolkit."""


class HeliosError(Exception):
    """Base class for all toolkit errors."""


class NonConvergence(HeliosError):
    """Geodesic iteration failed to converge (near-antipodal input)."""


class OutOfBounds(HeliosError):
    """Requested window extends past the source grid."""


class FormatViolation(HeliosError):
    """On-disk payload violates the file format or a data invariant."""


class CadenceMismatch(HeliosError):
    """Resampling target is not a multiple of the native cadence."""


class WindowTooSmall(HeliosError):
    """Window edge below the minimum of 1."""


class NotEnoughDays(HeliosError):
    """Fewer distinct days than requested folds."""


class ShapeMismatch(HeliosError):
    """Tensor operands have incompatible shapes."""


class NotScalarLoss(HeliosError):
    """backward() requires a scalar loss node."""


class EmptyTrainingSet(HeliosError):
    """Fit called with zero training rows."""


class NonFiniteLoss(HeliosError):
    """Training loss became NaN or infinite."""


class NonFiniteInput(HeliosError):
    """Fit called with NaN or infinite features/labels."""


class DimensionMismatch(HeliosError):
    """Query dimension differs from the training dimension."""


class AlignmentError(HeliosError):
    """Series expected on a common time grid disagree."""


class MissingHistory(HeliosError):
    """Not enough preceding frames to form the model input window."""


class LengthMismatch(HeliosError):
    """Paired series have different lengths."""


class EmptyInput(HeliosError):
    """Metric called on zero points."""


class EmptyAfterFloor(HeliosError):
    """Every point was excluded by the low-denominator floor."""


class ZeroBaseline(HeliosError):
    """Skill score undefined for a zero baseline error."""


class MarginTooSmall(HeliosError):
    """Scene grid cannot contain the site window plus advection margin."""


class EmptySeries(HeliosError):
    """Chart emission needs at least one finite series."""


class ConfigError(HeliosError):
    """Run configuration is missing, malformed, or has unknown keys."""
