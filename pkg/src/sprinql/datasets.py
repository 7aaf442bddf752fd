"""Experts, noise-corrupted policies, and ranked demonstration datasets.

Level 1 is the expert set; higher level index means more action noise and
(by construction, enforced with bounded retries) strictly lower empirical
mean true return.
"""

from dataclasses import dataclass, field

import numpy as np

from .mdp import (
    TabularMdp,
    require_valid,
    soft_value_iteration,
    softmax_rows,
)

EXPERT_SHARPNESS = 10.0  # expert = softmax(sharpness * soft-optimal Q)
MAX_RETRIES = 10


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class Trajectory:
    """Chained (state, action, next_state) triples."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def check_chain(self) -> bool:
        return len(self) >= 1 and bool(np.all(self.next_states[:-1] == self.states[1:]))

    def total_reward(self, reward: np.ndarray) -> float:
        return float(reward[self.states, self.actions].sum())


@dataclass
class RankedDatasets:
    """N trajectory sets ordered best (level 1) to worst."""

    levels: list  # list[list[Trajectory]]
    noise_levels: tuple
    seed: int
    env_name: str = field(default="", compare=False)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def level_sizes(self) -> list[int]:
        return [sum(len(t) for t in lvl) for lvl in self.levels]

    def level_mean_returns(self, reward: np.ndarray) -> list[float]:
        return [
            float(np.mean([t.total_reward(reward) for t in lvl])) for lvl in self.levels
        ]

    def flat_transitions(self, level: int):
        """Concatenated (s, a, s') index arrays for one level (0-based)."""
        trajs = self.levels[level]
        s = np.concatenate([t.states for t in trajs])
        a = np.concatenate([t.actions for t in trajs])
        sp = np.concatenate([t.next_states for t in trajs])
        return s, a, sp

    def all_transitions(self):
        """Union of all levels' transitions."""
        parts = [self.flat_transitions(i) for i in range(self.n_levels)]
        return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))


def expert_policy(mdp: TabularMdp, sharpness: float = EXPERT_SHARPNESS) -> np.ndarray:
    """Near-greedy expert: softmax of the soft-optimal Q scaled by `sharpness`."""
    _, Q, _ = soft_value_iteration(mdp, mdp.true_reward)
    return softmax_rows(sharpness * Q)


def noisy_policy(expert: np.ndarray, noise_level: float) -> np.ndarray:
    """(1 - eps) * expert + eps * uniform over actions."""
    if not 0.0 <= noise_level <= 1.0:
        raise ValueError("noise_level must be in [0, 1]")
    n_actions = expert.shape[1]
    return (1.0 - noise_level) * expert + noise_level / n_actions


def sample_trajectories(
    mdp: TabularMdp,
    pi: np.ndarray,
    n_transitions: int,
    horizon: int,
    rng_seed: int,
) -> list[Trajectory]:
    """Horizon-capped rollouts until at least n_transitions are collected
    (the last trajectory is completed). Deterministic given rng_seed."""
    require_valid(mdp)
    if n_transitions <= 0:
        raise ValueError("n_transitions must be positive")
    rng = np.random.default_rng(rng_seed)
    S, A = mdp.n_states, mdp.n_actions
    out: list[Trajectory] = []
    total = 0
    while total < n_transitions:
        s = int(rng.choice(S, p=mdp.initial_dist))
        ss, aa, nn = [], [], []
        for _ in range(horizon):
            a = int(rng.choice(A, p=pi[s]))
            sp = int(rng.choice(S, p=mdp.transition[s, a]))
            ss.append(s)
            aa.append(a)
            nn.append(sp)
            s = sp
        out.append(
            Trajectory(
                states=np.array(ss, dtype=np.int64),
                actions=np.array(aa, dtype=np.int64),
                next_states=np.array(nn, dtype=np.int64),
            )
        )
        total += horizon
    return out


def build_ranked_datasets(
    mdp: TabularMdp,
    noise_levels,
    sizes,
    horizon: int,
    seed: int,
    env_name: str = "",
) -> RankedDatasets:
    """Sample one dataset per noise level from the matching corrupted expert.

    noise_levels must be strictly increasing with first entry 0. If the
    empirical mean true returns do not come out strictly decreasing, the
    whole draw is retried with a fresh sub-seed, up to MAX_RETRIES times.
    """
    noise_levels = tuple(float(e) for e in noise_levels)
    sizes = tuple(int(n) for n in sizes)
    if len(noise_levels) < 2:
        raise DatasetError("need at least two expertise levels")
    if len(sizes) != len(noise_levels):
        raise DatasetError("sizes and noise_levels must have the same length")
    if noise_levels[0] != 0.0:
        raise DatasetError("first noise level must be 0 (expert)")
    if any(b <= a for a, b in zip(noise_levels, noise_levels[1:])):
        raise DatasetError("noise levels must be strictly increasing")

    expert = expert_policy(mdp)
    for attempt in range(MAX_RETRIES):
        levels = []
        for i, (eps, n) in enumerate(zip(noise_levels, sizes)):
            pi = noisy_policy(expert, eps)
            sub_seed = hash((seed, attempt, i)) & 0x7FFFFFFF
            levels.append(sample_trajectories(mdp, pi, n, horizon, sub_seed))
        data = RankedDatasets(
            levels=levels, noise_levels=noise_levels, seed=seed, env_name=env_name
        )
        means = data.level_mean_returns(mdp.true_reward)
        if all(a > b for a, b in zip(means, means[1:])):
            return data
    raise DatasetError(
        "could not realize strictly decreasing level returns; "
        "noise levels are too close to distinguish"
    )
