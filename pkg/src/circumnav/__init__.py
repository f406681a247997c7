"""Bearing-based distributed circumnavigation of a stationary target by unicycle agents."""

from .geometry import AgentState, OrientedPose, RelativeGeometry, polar_rates, relative_geometry, wrap_angle
from .guidance import (
    CCPlan,
    Direction,
    ErrorState,
    GuidanceGains,
    OrbitSpec,
    follower_control,
    leader_control,
    plan_cc,
)
from .simulator import Scenario, SimLog, run, step
from .stability import (
    EquilibriumSolution,
    PairConfig,
    ZubovParams,
    certify_gains,
    error_dynamics,
    solve_equilibrium,
    zubov_pde_residual,
    zubov_V,
)
from .topology import CommGraph, SensingGraph, build_comm_graph, components, validate_paths_to_leader

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "build_comm_graph",
    "CCPlan",
    "certify_gains",
    "CommGraph",
    "components",
    "Direction",
    "EquilibriumSolution",
    "error_dynamics",
    "ErrorState",
    "follower_control",
    "GuidanceGains",
    "leader_control",
    "OrbitSpec",
    "OrientedPose",
    "PairConfig",
    "plan_cc",
    "polar_rates",
    "relative_geometry",
    "RelativeGeometry",
    "run",
    "Scenario",
    "SensingGraph",
    "SimLog",
    "solve_equilibrium",
    "step",
    "validate_paths_to_leader",
    "wrap_angle",
    "zubov_pde_residual",
    "zubov_V",
    "ZubovParams",
]
