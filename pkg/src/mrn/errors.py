"""Exception hierarchy shared by every module of the package."""


class MRNError(Exception):
    """Base class for all library errors."""


class InvalidDimension(MRNError, ValueError):
    pass


class NotAProbability(MRNError, ValueError):
    pass


class NotStochastic(MRNError, ValueError):
    pass


class KTooLarge(MRNError, ValueError):
    pass


class GTooLarge(MRNError, ValueError):
    pass


class CoordinateOutOfRange(MRNError, IndexError):
    pass


class GenerationFailed(MRNError, RuntimeError):
    pass


class CappedSyncTime(MRNError, RuntimeError):
    """Raised when an operation needs a synchronization time that hit its cap."""


class DepthExceeded(MRNError, RuntimeError):
    pass


class ResidualUnderflow(MRNError, ArithmeticError):
    """Taylor residuals dropped below the resolvable floor.

    ``slope`` carries the fit over the usable prefix (``nan`` when fewer
    than two points remain).
    """

    def __init__(self, message, slope=float("nan"), usable=0):
        super().__init__(message)
        self.slope = slope
        self.usable = usable


class ThresholdOverlap(MRNError, ValueError):
    pass


class ConsistencyError(MRNError, AssertionError):
    """A mathematical identity that must hold on every input was violated."""


class ConfigInvalid(MRNError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
