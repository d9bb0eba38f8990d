"""Optimal nonlinear electricity tariffs for a provider screening CRRA consumers.

The library solves the provider's contract-design problem against a continuum
of private types, for constant or strictly concave type-dependent outside
options, and ships independent brute-force oracles that certify the closed
forms. See the README for the CLI entry points.
"""

from .agent import (
    IndirectUtility,
    ParticipationSet,
    best_response_closed_form,
    best_response_grid,
    participation_set,
)
from .errors import (
    AssumptionViolation,
    ConfigError,
    ConvergenceError,
    DomainError,
    InfeasibleSet,
    InvalidParams,
    InvalidReservation,
    NonConvergence,
    NoRoot,
)
from .evaluation import principal_utility, relaxed_objective
from .model import (
    ConcaveReservation,
    ConstantReservation,
    ModelParams,
    ScenarioConfig,
    TabulatedCost,
    TasteMap,
    TypeDistribution,
    canonical_params,
    eval_cost,
    eval_marginal_cost,
    eval_utility,
    g_K,
    g_K_inverse,
)
from .oracle import oracle_agent_sweep, oracle_relaxed_maximize_const_h
from .solver_const_h import (
    SolveReport,
    build_tariff_const_h,
    capacity_A,
    ell_const,
    solve_x0_star,
)
from .solver_typed_h import (
    TypedHSolution,
    R_gamma,
    build_bridge,
    build_tariff_typed_h,
    constraint_check_A2prime,
    ell_ab,
    solve_a0_b0_star,
    validate_assumptions,
)
from .tariff import TabulatedSegment, Tariff, TariffSegment
from .uconvex import (
    SampledFunctionOfConsumption,
    SampledFunctionOfType,
    check_u_convexity,
    u_transform_indirect_to_price,
    u_transform_price_to_indirect,
)

__version__ = "0.1.0"
