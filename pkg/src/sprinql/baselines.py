"""Reference methods for the comparison tables: behavior cloning variants
and the two objective ablations (no reward regularizer, no distribution
matching)."""

from dataclasses import dataclass, replace

import numpy as np

from .datasets import RankedDatasets
from .objective import SprinqlConfig, train_sprinql

LEVEL_SELECTORS = ("expert-only", "suboptimal-only", "all", "weighted")


@dataclass(frozen=True)
class BcConfig:
    smoothing: float = 1.0  # additive count smoothing
    level_selector: str = "all"

    def __post_init__(self):
        if self.smoothing < 0:
            raise ValueError("smoothing must be non-negative")
        if self.level_selector not in LEVEL_SELECTORS:
            raise ValueError(f"level_selector must be one of {LEVEL_SELECTORS}")


def bc_policy(
    data: RankedDatasets,
    n_states: int,
    n_actions: int,
    cfg: BcConfig | None = None,
    weights=None,
) -> np.ndarray:
    """Tabular maximum-likelihood policy from (weighted) action counts.

    pi(a|s) is proportional to the weighted count of (s,a) plus smoothing;
    states never visited in the selected levels fall back to uniform.
    """
    cfg = cfg or BcConfig()
    if cfg.level_selector == "expert-only":
        selected = [0]
    elif cfg.level_selector == "suboptimal-only":
        selected = list(range(1, data.n_levels))
    else:
        selected = list(range(data.n_levels))
    if not selected:
        raise ValueError("no levels selected")

    counts = np.zeros((n_states, n_actions))
    if cfg.level_selector == "weighted":
        if weights is None:
            raise ValueError("weighted BC needs a weight vector")
        lvl_w = np.asarray(weights, dtype=float)
        # weighted NLL averages per level, so counts are level means scaled
        # back to total-count magnitude for comparable smoothing
        total = sum(len(data.flat_transitions(i)[0]) for i in selected)
        for i in selected:
            s, a, _ = data.flat_transitions(i)
            np.add.at(counts, (s, a), lvl_w[i] * total / max(1, len(s)))
    else:
        for i in selected:
            s, a, _ = data.flat_transitions(i)
            np.add.at(counts, (s, a), 1.0)

    visited = counts.sum(axis=1) > 0
    counts[visited] += cfg.smoothing
    pi = np.full((n_states, n_actions), 1.0 / n_actions)
    pi[visited] = counts[visited] / counts[visited].sum(axis=1, keepdims=True)
    return pi


def bc_policy_raw_counts(
    data: RankedDatasets, n_states: int, n_actions: int, smoothing: float = 0.0, levels=None
) -> np.ndarray:
    """Plain empirical MLE over raw counts (no per-level normalization);
    the law-of-large-numbers consistency oracle for BC."""
    counts = np.zeros((n_states, n_actions))
    for i in levels if levels is not None else range(data.n_levels):
        s, a, _ = data.flat_transitions(i)
        np.add.at(counts, (s, a), 1.0)
    counts += smoothing
    visited = counts.sum(axis=1) > 0
    pi = np.full((n_states, n_actions), 1.0 / n_actions)
    pi[visited] = counts[visited] / counts[visited].sum(axis=1, keepdims=True)
    return pi


def train_noreg(data, weights, cfg: SprinqlConfig, n_states, n_actions, gamma, eval_fn=None):
    """Ablation: the full objective with the reward regularizer off
    (alpha forced to 0); the conservative term is retained."""
    cfg = replace(cfg, alpha=0.0)
    rbar = np.zeros((n_states, n_actions))
    return train_sprinql(data, rbar, weights, cfg, n_states, n_actions, gamma, eval_fn=eval_fn)


def train_nodm(
    data,
    rbar,
    weights,
    cfg: SprinqlConfig,
    n_states,
    n_actions,
    gamma,
    eval_fn=None,
    exact_residual: bool = False,
):
    """Ablation: distribution matching off; every other term (including the
    surrogate form of the reward regularizer and the conservative penalty)
    is kept identical to the full method. exact_residual=True instead runs
    genuine soft Q-learning toward rbar with the unsurrogated squared
    inverse-Bellman residual."""
    return train_sprinql(
        data,
        rbar,
        weights,
        cfg,
        n_states,
        n_actions,
        gamma,
        eval_fn=eval_fn,
        dm=False,
        exact_residual=exact_residual,
    )
