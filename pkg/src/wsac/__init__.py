"""Tabular Weighted Safe Actor-Critic (WSAC) for safe offline RL."""

from .cmdp import (
    Cmdp,
    ConfigurationError,
    CoverageError,
    InfeasibleError,
    MixturePolicy,
    Occupancy,
    Policy,
    ValueBundle,
    bellman_apply,
    concentrability,
    importance_weights,
    min_safe_cost,
    mixture_eval,
    occupancy,
    optimal_values,
    policy_eval,
    solve_optimal_safe,
)
from .critics import (
    CriticSolverCfg,
    QTable,
    SampleMeasure,
    WeightClass,
    critic_solve_cost,
    critic_solve_reward,
    loss_l,
    weighted_bellman_error,
)
from .data import Dataset, Transition, behavior_clone, mixture_behavior, sample_dataset
from .driver import RunTrace, WsacConfig, run_wsac, run_wsac_exact
from .oracle import OracleState, PayoffTable, aggression_limited_payoff, default_eta, po_update, regret_audit

__version__ = "0.1.0"

__all__ = [
    "Cmdp",
    "ConfigurationError",
    "CoverageError",
    "InfeasibleError",
    "MixturePolicy",
    "Occupancy",
    "Policy",
    "ValueBundle",
    "bellman_apply",
    "concentrability",
    "importance_weights",
    "min_safe_cost",
    "mixture_eval",
    "occupancy",
    "optimal_values",
    "policy_eval",
    "solve_optimal_safe",
    "CriticSolverCfg",
    "QTable",
    "SampleMeasure",
    "WeightClass",
    "critic_solve_cost",
    "critic_solve_reward",
    "loss_l",
    "weighted_bellman_error",
    "Dataset",
    "Transition",
    "behavior_clone",
    "mixture_behavior",
    "sample_dataset",
    "RunTrace",
    "WsacConfig",
    "run_wsac",
    "run_wsac_exact",
    "OracleState",
    "PayoffTable",
    "aggression_limited_payoff",
    "default_eta",
    "po_update",
    "regret_audit",
]
