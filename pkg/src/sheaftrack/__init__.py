"""Decentralized multi-agent multi-target tracking on cellular sheaves.

The package models heterogeneous agent/target networks as weighted cellular
sheaves, decides tracking feasibility through relative cohomology, solves
the harmonic-extension equation for the commanded agent configuration, and
simulates the decentralized disagreement controller together with its
exponential-convergence envelope.
"""

from ._kernels import HAVE_NATIVE, IMPLEMENTATION
from .cohomology import CohomologyReport, check_feasibility, global_sections, relative_cohomology
from .controller import ControllerGains, EdgeMeasurement, control_input, ensemble_control, local_disagreement, measure_edge
from .dynamics import (
    AgentModel,
    EffectivenessRankError,
    FlowField,
    LissajousPath,
    OffsetConsensus,
    SinusoidDisturbance,
    TargetModel,
    field_velocity,
    lissajous_velocity,
    pseudoinverse,
)
from .harmonic import (
    InfeasibleProblemError,
    TrackingProblem,
    assemble,
    dirichlet_energy,
    disagreement_ensemble,
    harmonic_extension,
    offset_load,
)
from .sheaf import (
    CellularSheaf,
    Cochain,
    Graph,
    coboundary,
    coboundary_apply,
    constant_sheaf,
    induced_subsheaf,
    laplacian_apply_local,
    sheaf_laplacian,
)
from .simulator import (
    BoundQuantities,
    BoundReport,
    Scenario,
    SimulationDivergedError,
    TrajectoryLog,
    compute_bound_quantities,
    error_dynamics_residual,
    fit_decay_rate,
    formation_residuals,
    integrate,
    theorem_bound,
    verify_bound,
)

__version__ = "0.1.0"

__all__ = [
    "AgentModel",
    "BoundQuantities",
    "BoundReport",
    "CellularSheaf",
    "Cochain",
    "CohomologyReport",
    "ControllerGains",
    "EdgeMeasurement",
    "EffectivenessRankError",
    "FlowField",
    "Graph",
    "HAVE_NATIVE",
    "IMPLEMENTATION",
    "InfeasibleProblemError",
    "LissajousPath",
    "OffsetConsensus",
    "Scenario",
    "SimulationDivergedError",
    "SinusoidDisturbance",
    "TargetModel",
    "TrackingProblem",
    "TrajectoryLog",
    "assemble",
    "check_feasibility",
    "coboundary",
    "coboundary_apply",
    "compute_bound_quantities",
    "constant_sheaf",
    "control_input",
    "dirichlet_energy",
    "disagreement_ensemble",
    "ensemble_control",
    "error_dynamics_residual",
    "field_velocity",
    "fit_decay_rate",
    "formation_residuals",
    "global_sections",
    "harmonic_extension",
    "induced_subsheaf",
    "integrate",
    "laplacian_apply_local",
    "lissajous_velocity",
    "local_disagreement",
    "measure_edge",
    "offset_load",
    "pseudoinverse",
    "relative_cohomology",
    "sheaf_laplacian",
    "theorem_bound",
    "verify_bound",
]
