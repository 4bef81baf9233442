"""Steady traveling vortex pairs of the 2D Euler equations.

Computes pairs as maximizers of a penalized kinetic energy over
nonnegative vorticity fields confined to a box in the half plane,
then checks how the solutions concentrate as the penalty stiffens.
"""

__version__ = "0.1.0"

from .geometry import (
    FullPlaneField,
    GridSpec,
    ScalarField,
    SupportStats,
    bilinear_eval,
    build_grid,
    integrate,
    moment_x1,
    read_field_csv,
    support_stats,
    write_field_csv,
)
from .kernel import (
    GreenOperator,
    green_apply,
    potential_at_points,
    quadratic_form,
    self_cell_coefficient,
    stream_total,
    velocity_from_stream,
)
from .profiles import (
    GrowthConstants,
    Heaviside,
    Power,
    Profile,
    Tabulated,
    TailCheck,
    TruncatedProfile,
    growth_constants,
    has_subexponential_tail,
    make_profile,
    tail_rate_threshold,
    truncate,
)
from .solver import (
    EnergyDescentError,
    HistoryRow,
    IterationState,
    MassMatchError,
    MultiplierBracketError,
    RhoPolicy,
    SolutionBundle,
    SolverConfig,
    TruncationCapError,
    initialize,
    relaxation_step,
    residual_l1,
    solve,
    solve_multiplier,
    steiner_symmetrize,
    tau,
)
from .analysis import (
    AllUnconvergedError,
    FitResult,
    SweepRecord,
    argmin_kirchhoff_routh,
    core_energy,
    core_rescale,
    core_shape,
    energy,
    energy_identity_gap,
    fit_loglinear,
    kirchhoff_routh,
    point_vortex_reference,
    sweep,
)

__all__ = [
    "__version__",
    "FullPlaneField",
    "GridSpec",
    "ScalarField",
    "SupportStats",
    "bilinear_eval",
    "build_grid",
    "integrate",
    "moment_x1",
    "read_field_csv",
    "support_stats",
    "write_field_csv",
    "GreenOperator",
    "green_apply",
    "potential_at_points",
    "quadratic_form",
    "self_cell_coefficient",
    "stream_total",
    "velocity_from_stream",
    "GrowthConstants",
    "Heaviside",
    "Power",
    "Profile",
    "Tabulated",
    "TailCheck",
    "TruncatedProfile",
    "growth_constants",
    "has_subexponential_tail",
    "make_profile",
    "tail_rate_threshold",
    "truncate",
    "EnergyDescentError",
    "HistoryRow",
    "IterationState",
    "MassMatchError",
    "MultiplierBracketError",
    "RhoPolicy",
    "SolutionBundle",
    "SolverConfig",
    "TruncationCapError",
    "initialize",
    "relaxation_step",
    "residual_l1",
    "solve",
    "solve_multiplier",
    "steiner_symmetrize",
    "tau",
    "AllUnconvergedError",
    "FitResult",
    "SweepRecord",
    "argmin_kirchhoff_routh",
    "core_energy",
    "core_rescale",
    "core_shape",
    "energy",
    "energy_identity_gap",
    "fit_loglinear",
    "kirchhoff_routh",
    "point_vortex_reference",
    "sweep",
]
