"""Pessimistic version-space selection for offline RL in layered tabular MDPs.

The package holds exact dynamic-programming routines, offline data
generation, finite function and weight classes, the PABC selectors with
their Lagrangian and online-evaluation variants, named benchmark instances,
and a seeded experiment harness.
"""
from .classes import (
    EmptyVersionSpaceError,
    FunctionClass,
    WeightClass,
    eps_F,
    eps_F_inf,
    eps_W,
    is_regular,
    prescreen,
    regularity_check,
)
from .data import (
    Dataset,
    Transitions,
    class_bound,
    concentrability,
    data_distribution,
    density_ratio,
    sample_dataset,
)
from .experiment import ExperimentConfig, TrialReport, run_experiment, sweep
from .instances import (
    NamedInstance,
    build_counterexample,
    build_rate_instance,
    build_table1_example,
    random_instance,
)
from .mdp import (
    InvalidMdpError,
    LayeredMdp,
    Policy,
    TimestepTable,
    bellman_backup,
    bellman_residual,
    gap_of_class,
    gap_of_function,
    greedy_policy,
    occupancy,
    optimal_q,
    policy_value,
    state_values,
    validate_mdp,
)
from .online import SimulatorAccess, mc_sample_count, monte_carlo_eval, pabc_oa
from .solvers import (
    MODES,
    PabcConfig,
    Selection,
    avg_bellman_error,
    consistency_filters,
    empirical_loss,
    eps_for_n,
    eps_stat,
    hyperparameters,
    pabc,
    pabc_l,
    population_loss,
)

__version__ = "0.1.0"
