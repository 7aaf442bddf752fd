"""Gridworld MDP generator: the desk-scale environment family.

States are cells of a width x height grid, actions are the four compass
moves. With slip probability eps the agent moves perpendicular to the
intended direction (eps/2 each side). Goal cells pay their reward every
step the agent occupies them; all other cells pay -step_penalty.
"""

from dataclasses import dataclass, field

import numpy as np

from .mdp import TabularMdp, validate_mdp

# action order: up, down, left, right (dy, dx)
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
PERP = {0: (2, 3), 1: (2, 3), 2: (0, 1), 3: (0, 1)}


@dataclass(frozen=True)
class GridworldConfig:
    width: int
    height: int
    slip_prob: float = 0.0
    goals: tuple = ()  # ((row, col, reward), ...)
    step_penalty: float = 0.0
    horizon: int = 40
    seed: int = 0
    discount: float = 0.99
    name: str = field(default="grid", compare=False)


def _check(cfg: GridworldConfig) -> None:
    if cfg.width < 1 or cfg.height < 1:
        raise ValueError("grid dimensions must be positive")
    if not 0.0 <= cfg.slip_prob < 1.0:
        raise ValueError("slip_prob must be in [0, 1)")
    if len(cfg.goals) == 0:
        raise ValueError("at least one goal cell required")
    for row, col, _ in cfg.goals:
        if not (0 <= row < cfg.height and 0 <= col < cfg.width):
            raise ValueError(f"goal cell ({row},{col}) outside the grid")
    if cfg.horizon < 1:
        raise ValueError("horizon must be positive")


def cell_index(cfg: GridworldConfig, row: int, col: int) -> int:
    return row * cfg.width + col


def make_gridworld(cfg: GridworldConfig) -> TabularMdp:
    """Build the exact TabularMdp for a gridworld config.

    Moves that would leave the grid keep the agent in place. The reward
    r*(s,a) depends only on the current cell: goal value, or -step_penalty
    off-goal.
    """
    _check(cfg)
    W, H = cfg.width, cfg.height
    S, A = W * H, 4
    goal_reward = np.zeros(S)
    for row, col, val in cfg.goals:
        goal_reward[cell_index(cfg, row, col)] = val

    def step(s: int, a: int) -> int:
        row, col = divmod(s, W)
        dy, dx = MOVES[a]
        r2, c2 = row + dy, col + dx
        if not (0 <= r2 < H and 0 <= c2 < W):
            return s
        return r2 * W + c2

    P = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            P[s, a, step(s, a)] += 1.0 - cfg.slip_prob
            for p in PERP[a]:
                P[s, a, step(s, p)] += cfg.slip_prob / 2.0

    reward = np.where(goal_reward != 0.0, goal_reward, -cfg.step_penalty)[:, None] * np.ones((1, A))
    p0 = np.full(S, 1.0 / S)
    mdp = TabularMdp(
        transition=P,
        true_reward=reward,
        discount=cfg.discount,
        initial_dist=p0,
        name=cfg.name,
    )
    assert validate_mdp(mdp) is None
    return mdp


def standard_suite() -> list[GridworldConfig]:
    """The three default environment variants, easiest first."""
    return [
        GridworldConfig(width=4, height=4, slip_prob=0.0,
                        goals=((3, 3, 1.0),), horizon=40, name="grid4"),
        GridworldConfig(width=5, height=5, slip_prob=0.1,
                        goals=((4, 4, 1.0),), horizon=40, name="grid5"),
        GridworldConfig(width=6, height=6, slip_prob=0.2,
                        goals=((5, 5, 1.0), (0, 5, 0.3)), horizon=40, name="grid6"),
    ]


def suite_config(name: str) -> GridworldConfig:
    for cfg in standard_suite():
        if cfg.name == name:
            return cfg
    raise KeyError(f"unknown environment '{name}'")
