"""Exception types raised across the package."""


class SuspflowError(Exception):
    """Base class for all package errors."""


class SingularPoint(SuspflowError, ValueError):
    def __init__(self, x, dist=0.0):
        super().__init__(f"point {x!r} lies on the singular set (dist={dist:g})")
        self.x = x
        self.dist = dist


class OutOfDomain(SuspflowError, ValueError):
    pass


class SingularOrbit(SuspflowError, ValueError):
    """An orbit hit the singular set; ``index`` is the first bad iterate."""

    def __init__(self, index, x=None):
        super().__init__(f"orbit reached the singular set at iterate {index}")
        self.index = index
        self.x = x


class InsufficientSamples(SuspflowError):
    pass


class BranchMismatch(SuspflowError):
    pass


class UnknownEntropy(SuspflowError):
    pass


class NonConvergent(SuspflowError):
    pass


class DegenerateFit(SuspflowError):
    pass


class RegionUnsupported(SuspflowError):
    pass


class DegenerateGap(SuspflowError):
    pass


class SingularImage(SuspflowError):
    pass


class LedgerMissing(SuspflowError):
    pass


class RateNotNegative(SuspflowError):
    pass


class Diverged(SuspflowError):
    pass


class NoReturn(SuspflowError):
    pass


class SingularLine(SuspflowError, ValueError):
    pass


class EmptyBin(SuspflowError):
    pass


class CalibrationFailed(SuspflowError):
    pass


class ConfigInvalid(SuspflowError):
    """Raised with a mapping of field name to message."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = {"config": errors}
        self.errors = dict(errors)
        msg = "; ".join(f"{k}: {v}" for k, v in self.errors.items())
        super().__init__(f"invalid config: {msg}")
