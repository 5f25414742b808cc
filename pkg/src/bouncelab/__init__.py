"""Numerical laboratory for a ball bouncing on a periodically moving racket."""

from __future__ import annotations

from .errors import (
    BounceLabError,
    DomainExit,
    GrazingImpact,
    GridTooCoarse,
    InadmissibleSegment,
    NoConvergence,
    PathCollapse,
    SingularImplicitSystem,
    SingularJacobian,
    SolverFailure,
)
from .forcing import ForcingProfile
from .impact_map import (
    EnergyState,
    JacobianTE,
    MapParams,
    Trajectory,
    VelocityState,
    iterate,
    jacobian_energy,
    next_impact_time,
    simulate_bouncing,
    step_energy,
    step_velocity,
)
from .orbit_finder import (
    DegeneracyReport,
    OrbitKey,
    PeriodicOrbit,
    ReportKind,
    Stability,
    Tolerances,
    birkhoff_validate,
    classify_stability,
    existence_threshold,
    find_periodic_orbits,
    minimax_orbit,
    minimize_action,
    newton_orbit,
    sweep_enumerate,
)
from .twist_analysis import DerivativeMethod, TwistReport, apriori_bounds_check, dtq_de, twist_certificate
from .variational import ActionConfiguration, GeneratingContext, action_W, gen_h, gen_h_consistency

__version__ = "0.1.0"

__all__ = [
    "ActionConfiguration",
    "BounceLabError",
    "DegeneracyReport",
    "DerivativeMethod",
    "DomainExit",
    "EnergyState",
    "ForcingProfile",
    "GeneratingContext",
    "GrazingImpact",
    "GridTooCoarse",
    "InadmissibleSegment",
    "JacobianTE",
    "MapParams",
    "NoConvergence",
    "OrbitKey",
    "PathCollapse",
    "PeriodicOrbit",
    "ReportKind",
    "SingularImplicitSystem",
    "SingularJacobian",
    "SolverFailure",
    "Stability",
    "Tolerances",
    "Trajectory",
    "TwistReport",
    "VelocityState",
    "action_W",
    "apriori_bounds_check",
    "birkhoff_validate",
    "classify_stability",
    "dtq_de",
    "existence_threshold",
    "find_periodic_orbits",
    "gen_h",
    "gen_h_consistency",
    "iterate",
    "jacobian_energy",
    "minimax_orbit",
    "minimize_action",
    "newton_orbit",
    "next_impact_time",
    "simulate_bouncing",
    "step_energy",
    "step_velocity",
    "sweep_enumerate",
    "twist_certificate",
]
