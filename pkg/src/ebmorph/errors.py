"""Exception types raised across the package."""


class EbmorphError(Exception):
    """Base class for all package errors."""


class FormatError(EbmorphError, ValueError):
    pass


class EmptyCurve(EbmorphError, ValueError):
    pass


class InvalidPeriod(EbmorphError, ValueError):
    pass


class NonPositiveMax(EbmorphError, ValueError):
    pass


class NonPositiveQ(EbmorphError, ValueError):
    pass


class InvalidPotential(EbmorphError, ValueError):
    pass


class InvalidParams(EbmorphError, ValueError):
    pass


class TooManyOutliers(EbmorphError, ValueError):
    pass


class TargetExceedsLength(EbmorphError, ValueError):
    pass


class ShapeMismatch(EbmorphError, ValueError):
    pass


class ArchMismatch(EbmorphError, ValueError):
    pass


class DegenerateDataset(EbmorphError, ValueError):
    pass


class LengthMismatch(EbmorphError, ValueError):
    pass


class EmptyCounts(EbmorphError, ValueError):
    pass


class SingleClass(EbmorphError, ValueError):
    pass


class InvalidSpec(EbmorphError, ValueError):
    pass
