"""Offline imitation learning from ranked demonstrations on exact tabular
MDPs: preference-fitted reference rewards, learned dataset weights, and a
concave conservative inverse soft-Q objective, with oracle solvers backing
every component."""

from .mdp import (
    TabularMdp,
    inverse_soft_bellman,
    occupancy_measure,
    policy_return,
    soft_value_iteration,
    validate_mdp,
)
from .gridworld import GridworldConfig, make_gridworld, standard_suite
from .datasets import (
    RankedDatasets,
    Trajectory,
    build_ranked_datasets,
    expert_policy,
    noisy_policy,
    sample_trajectories,
)
from .reference import (
    PreferenceFitConfig,
    bt_probability,
    estimate_weights,
    fit_reference_reward,
    reference_loss,
    reference_loss_gradient,
)
from .objective import (
    EmpiricalExpectations,
    SprinqlConfig,
    conservative_value,
    gamma_hat,
    gamma_hat_gradient,
    h_hat,
    h_original,
    recovered_reward,
    soft_policy,
    soft_value,
    train_sprinql,
)
from .baselines import BcConfig, bc_policy, train_nodm, train_noreg
from .evaluation import (
    ExperimentResult,
    SuiteConfig,
    evaluate_policy,
    normalized_score,
    reward_correlation,
    run_comparison,
)

__version__ = "0.1.0"
