"""Exception hierarchy.

Validation problems derive from :class:`ZRPError` (a ``ValueError``), so
callers that only care about bad input can catch ``ValueError``.
"""


class ZRPError(ValueError):
    """Base class for all input/validation errors raised by the package."""


class RateOutOfRange(ZRPError):
    pass


class SpecMismatch(ZRPError):
    pass


class FugacityTooHigh(ZRPError):
    pass


class DensityAboveCritical(ZRPError):
    pass


class WindowMismatch(ZRPError):
    pass


class InvalidSnapshotTimes(ZRPError):
    pass


class UnknownBond(ZRPError):
    pass


class NoAbsorbingBoundary(ZRPError):
    pass


class SiteOutOfWindow(ZRPError):
    pass


class WindowTooSmall(ZRPError):
    pass


class TooFewSamples(ZRPError):
    pass


class ExcessiveExits(ZRPError):
    pass


class SubcriticalStart(ZRPError):
    pass


class InfiniteCritical(ZRPError):
    pass


class BottleneckInProbe(ZRPError):
    """The slowest window site lies inside the probe block.

    The probe block then never sees the bottleneck current, so the
    reference marginals are meaningless.
    """


class OccupancyOverflow(ZRPError):
    pass


class ConfigError(ZRPError):
    """Schema violation in a JSON document; ``pointer`` is a JSON pointer."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
