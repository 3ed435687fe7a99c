"""Optimal secondary-user power control for spectrum-sharing fading channels.

Two protection rules for the primary user are supported: an average
interference power constraint (AIPC) and a primary capacity loss
constraint (PCLC). Everything is evaluated over a seeded Monte Carlo
fading ensemble.
"""

__version__ = "0.1.0"

from ._dual import SolverOptions
from .aipc import AipcProblem, DualPair, PolicySolution, aipc_power, aipc_powers, solve_aipc
from .capacity import (
    BoundCheck,
    CapacityPoint,
    MacBounds,
    capacity_loss_bound_check,
    capacity_point,
    mac_rate_bounds,
    primary_capacity,
    primary_capacity_max,
    secondary_capacity,
)
from .errors import (
    ConsistencyError,
    InfeasibleError,
    ParameterError,
    RangeError,
    ResourceError,
    SpecShareError,
    StateError,
    UnboundedPowerError,
)
from .fading import (
    ChannelDistribution,
    FadingEnsemble,
    FadingState,
    load_ensemble,
    populate_effective_gains,
    sample_ensemble,
    save_ensemble,
)
from .frontier import (
    ConstraintKind,
    FrontierPoint,
    SweepConfig,
    build_ensemble,
    compare_at_loss,
    trace_frontier,
)
from .oracle import DiscreteEnsemble, OracleGrid, brute_force_p1, brute_force_p2
from .pclc import (
    PclcProblem,
    RootStats,
    SelfBiasTerm,
    lambda_factor,
    pclc_power,
    pclc_powers,
    solve_pclc,
)
from .pu_policy import PolicyKind, PuPolicy, apply_pu_policy, calibrate_water_level, make_pu_policy

