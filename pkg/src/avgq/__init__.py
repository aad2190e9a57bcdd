"""Tabular average-reward Q-learning with adaptive stepsizes, exact solvers and experiments."""

from .errors import BoundViolation, ConvergenceError, ModelError, RateFitError, UsageError
from .mdp import (
    BehaviorPolicy,
    Policy,
    TabularMdp,
    async_bellman,
    bellman,
    load_mdp,
    random_operator,
    stationary_distribution,
    tv_contraction_factor,
)
from .seminorm import center, center_offset, span, span_dist, sup_dist, sup_norm
from .solvers import (
    SolveReport,
    discounted_value_iteration,
    greedy_policy,
    policy_average_reward,
    seminorm_fixed_point,
    solve_async_bellman,
    solve_bellman,
)
from .learner import Learner, LearnerConfig, log_growth_bound, make_rng
from .harness import (
    ExperimentConfig,
    MetricSeries,
    build_appendix_c,
    emit,
    fit_rate,
    policy_rollout,
    run_experiment,
)

__all__ = [
    "BehaviorPolicy",
    "Policy",
    "TabularMdp",
    "async_bellman",
    "bellman",
    "load_mdp",
    "random_operator",
    "stationary_distribution",
    "tv_contraction_factor",
    "SolveReport",
    "discounted_value_iteration",
    "greedy_policy",
    "policy_average_reward",
    "seminorm_fixed_point",
    "solve_async_bellman",
    "solve_bellman",
    "ExperimentConfig",
    "MetricSeries",
    "build_appendix_c",
    "emit",
    "fit_rate",
    "policy_rollout",
    "run_experiment",
    "BoundViolation",
    "ConvergenceError",
    "ModelError",
    "RateFitError",
    "UsageError",
    "center",
    "center_offset",
    "span",
    "span_dist",
    "sup_dist",
    "sup_norm",
    "Learner",
    "LearnerConfig",
    "log_growth_bound",
    "make_rng",
]

__version__ = "0.1.0"
