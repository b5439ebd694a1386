"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class MarkerFusionError(Exception):
    """Base class for every error raised by this package."""


# geom
class EmptySet(MarkerFusionError, ValueError):
    pass


class Degenerate(MarkerFusionError):
    """No consensus set reached the required size."""


# tracker
class TargetMissing(MarkerFusionError, ValueError):
    pass


class DuplicateTag(MarkerFusionError, ValueError):
    pass


class UnknownTag(MarkerFusionError, KeyError):
    pass


class NotInitialized(MarkerFusionError):
    pass


class VioGap(MarkerFusionError):
    """The VIO stream does not cover a requested timestamp."""


class NegativeDelay(MarkerFusionError, ValueError):
    pass


class ClockSkew(MarkerFusionError, ValueError):
    pass


# scene
class KinematicsGap(MarkerFusionError):
    pass


class MissingRoot(MarkerFusionError, ValueError):
    pass


# sim / cli
class InvalidConfig(MarkerFusionError, ValueError):
    """Configuration failed validation.

    ``field`` names the offending key (dotted path) when known.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


# eval
class NoEstimates(MarkerFusionError, ValueError):
    pass


class IoFailure(MarkerFusionError, OSError):
    pass
