"""Exceptions raised by the bouncing-ball machinery."""

from __future__ import annotations


class BounceLabError(Exception):
    """Base class for all package errors."""


class GrazingImpact(BounceLabError):
    """The ball leaves with inertial velocity not above the racket velocity (w <= f'(t))."""


class SolverFailure(BounceLabError):
    """The impact-time root could not be bracketed or polished."""


class SingularImplicitSystem(BounceLabError):
    """Implicit-function denominator (arrival relative velocity) vanished."""


class DomainExit(BounceLabError):
    """An iterate left the region where the map is defined (e <= 0)."""


class InadmissibleSegment(BounceLabError):
    """A pair of impact times does not describe a genuine free-flight arc."""


class NoConvergence(BounceLabError):
    """An iterative orbit search stopped without meeting its tolerance."""


class SingularJacobian(BounceLabError):
    """Newton matrix of the fixed-point problem is numerically singular.

    Raised after the iteration has converged when the fixed point is not
    isolated (e.g. the integrable family). The converged orbit is attached
    as ``orbit`` so callers can still use it.
    """

    def __init__(self, message: str, orbit=None, condition: float = float("inf")):
        super().__init__(message)
        self.orbit = orbit
        self.condition = condition


class PathCollapse(BounceLabError):
    """The mountain-pass string has no interior maximum (degenerate landscape)."""


class GridTooCoarse(BounceLabError):
    """Fixed points were detected at the boundary of the search grid."""
