"""Optimal execution in block-shaped limit order books with time-varying liquidity."""

from .closedform import (
    AnalyticExample,
    ClosedFormSolution,
    FProfile,
    ManipulationVerdict,
    Regime,
    analytic_example,
    chi,
    classify_manipulation,
    continuous_barrier,
    dynamic_spread_optimal,
    f_profile,
    infinite_barrier_check,
    round_trip_witness,
    zero_spread_optimal,
)
from .cost import (
    CostBreakdown,
    cost_decomposition,
    cost_via_impact_identity,
    temp_cost,
    total_cost_dynamic_spread,
    zero_spread_cost,
)
from .dp import Barrier, PiecewiseQuadraticVF, SolveResult, backstep, dp_value, extract_strategy, solve, terminal_vf
from .errors import (
    ClosedFormUnavailableError,
    ConditionViolatedError,
    ConfigError,
    DomainError,
    InternalConsistencyError,
    PreconditionError,
    ProfileError,
    TvlobError,
    UnsupportedProfileError,
)
from .impact import (
    ContinuousStrategy,
    DiscreteStrategy,
    ImpactPath,
    continuous_impact,
    one_sided_impact,
    two_sided_impact,
    zero_spread_impact,
)
from .liquidity import LiquidityProfile, TimeGrid, decay_factor, eval_K, eval_K_derivatives

__version__ = "0.1.0"
