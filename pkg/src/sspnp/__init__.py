"""Steady-state Poisson-Nernst-Planck solver and curve-tracing toolkit."""

__version__ = "0.1.0"

from .bvp import (
    BvpSolution,
    BvpSpec,
    Mesh,
    SolverSettings,
    estimate_residual,
    evaluate,
    initial_mesh,
    refine_mesh,
    solve_bvp,
    solve_on_mesh,
    uniform_mesh,
)
from .errors import (
    ConfigError,
    ConvergedToWrongFold,
    DimensionMismatch,
    InvalidFormulation,
    MeshBudgetExceeded,
    NegativeConcentration,
    NeutralityViolated,
    NonConvergence,
    NonPositiveScale,
    OddFoldCount,
    OutOfDomain,
    SingularJacobian,
    SspnpError,
    TooFewPoints,
)
from .model import (
    C2I,
    I2C,
    I2V,
    V2I,
    ChannelSystem,
    FixedChargeProfile,
    PhysicalScales,
    Species,
    build_bvp,
    build_ivaug,
    check_neutrality,
    fixed_charge_at,
    linear_guess,
    nondimensionalize,
    ode_jacobian,
    ode_rhs,
    screen_solution,
    total_current,
)
