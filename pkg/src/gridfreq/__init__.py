"""Secondary frequency control simulator for lossless swing-equation grids."""

from . import data
from .netmodel import (
    AreaPartition,
    Line,
    Network,
    Node,
    NodeKind,
    aggregate_constants,
    boundary_lines,
    load_case,
    load_partition,
    save_case,
)
from .dispatch import BarrierQuadratic, DispatchResult, Quadratic, clear
from .powerflow import (
    Equilibrium,
    FlowSolution,
    find_equilibrium,
    laplacian,
    security_check,
    solve_algebraic,
    synchronized_frequency,
)
from .controllers import (
    Agc,
    ControllerSpec,
    Dai,
    GatherBroadcast,
    PiacDecentralized,
    PiacMulti,
    PiacSingle,
    make_controller,
)
from .dynamics import Disturbance, Trajectory, simulate, to_phi_coordinates
from .analysis import (
    Metrics,
    check_lyapunov_descent,
    compute_metrics,
    lyapunov_value,
    make_lyapunov_config,
    potential_energy,
)

__version__ = "0.1.0"

__all__ = [
    "Agc",
    "AreaPartition",
    "BarrierQuadratic",
    "ControllerSpec",
    "Dai",
    "DispatchResult",
    "Disturbance",
    "Equilibrium",
    "FlowSolution",
    "GatherBroadcast",
    "Line",
    "Metrics",
    "Network",
    "Node",
    "NodeKind",
    "PiacDecentralized",
    "PiacMulti",
    "PiacSingle",
    "Quadratic",
    "Trajectory",
    "aggregate_constants",
    "boundary_lines",
    "check_lyapunov_descent",
    "clear",
    "compute_metrics",
    "find_equilibrium",
    "laplacian",
    "load_case",
    "load_partition",
    "lyapunov_value",
    "make_controller",
    "make_lyapunov_config",
    "potential_energy",
    "save_case",
    "security_check",
    "simulate",
    "solve_algebraic",
    "synchronized_frequency",
    "to_phi_coordinates",
]
