"""Shared test helpers: Monte-Carlo rollout oracles and tiny fixture MDPs."""

import numpy as np

from sprinql.mdp import TabularMdp


def chain_mdp(n_states=3, p_forward=0.8, discount=0.9, n_actions=2):
    """A one-way chain: action 0 advances with probability p_forward (last
    state absorbs), action 1 stays put. Reward 1 in the last state."""
    S, A = n_states, n_actions
    P = np.zeros((S, A, S))
    for s in range(S):
        nxt = min(s + 1, S - 1)
        P[s, 0, nxt] += p_forward
        P[s, 0, s] += 1.0 - p_forward
        for a in range(1, A):
            P[s, a, s] = 1.0
    r = np.zeros((S, A))
    r[S - 1, :] = 1.0
    p0 = np.zeros(S)
    p0[0] = 1.0
    return TabularMdp(transition=P, true_reward=r, discount=discount, initial_dist=p0, name="chain")


def mc_rollout_returns(mdp, pi, n_episodes, horizon, seed):
    """Vectorized Monte-Carlo discounted returns, one per episode."""
    rng = np.random.default_rng(seed)
    S, A = mdp.n_states, mdp.n_actions
    pi_cdf = np.cumsum(pi, axis=1)
    p_cdf = np.cumsum(mdp.transition.reshape(S * A, S), axis=1)
    s = np.searchsorted(np.cumsum(mdp.initial_dist), rng.random(n_episodes), side="right")
    rets = np.zeros(n_episodes)
    disc = 1.0
    for _ in range(horizon):
        a = (rng.random(n_episodes)[:, None] > pi_cdf[s]).sum(axis=1)
        rets += disc * mdp.true_reward[s, a]
        s = (rng.random(n_episodes)[:, None] > p_cdf[s * A + a]).sum(axis=1)
        disc *= mdp.discount
    return rets


def mc_occupancy(mdp, pi, n_episodes, horizon, seed):
    """Monte-Carlo estimate of the discounted state-action visitation
    distribution (t = 0 convention, sums to ~1 up to horizon truncation)."""
    rng = np.random.default_rng(seed)
    S, A = mdp.n_states, mdp.n_actions
    pi_cdf = np.cumsum(pi, axis=1)
    p_cdf = np.cumsum(mdp.transition.reshape(S * A, S), axis=1)
    s = np.searchsorted(np.cumsum(mdp.initial_dist), rng.random(n_episodes), side="right")
    occ = np.zeros(S * A)
    w = (1.0 - mdp.discount) / n_episodes
    for _ in range(horizon):
        a = (rng.random(n_episodes)[:, None] > pi_cdf[s]).sum(axis=1)
        np.add.at(occ, s * A + a, w)
        s = (rng.random(n_episodes)[:, None] > p_cdf[s * A + a]).sum(axis=1)
        w *= mdp.discount
    return occ.reshape(S, A)
