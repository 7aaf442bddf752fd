"""Exact tabular MDP representation and oracle solvers.

Everything downstream (data generation, training, evaluation) is
ground-truthed against the solvers in this module: soft value iteration,
exact occupancy measures via the linear flow equations, and exact policy
returns.
"""

from dataclasses import dataclass, field

import numpy as np

ROW_TOL = 1e-12
FLOW_TOL = 1e-9


class MdpError(Exception):
    pass


class ConvergenceError(MdpError):
    """An iterative solver failed to reach its tolerance within the cap."""


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP: transition P[s,a,s'], reward r*[s,a], discount, initial dist."""

    transition: np.ndarray
    true_reward: np.ndarray
    discount: float
    initial_dist: np.ndarray
    name: str = field(default="mdp", compare=False)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]


def validate_mdp(mdp: TabularMdp) -> str | None:
    """Check all TabularMdp invariants; return None if ok, else a message naming
    the first violated constraint."""
    P, r = np.asarray(mdp.transition), np.asarray(mdp.true_reward)
    if P.ndim != 3 or P.shape[0] != P.shape[2]:
        return f"transition tensor has shape {P.shape}, expected (S, A, S)"
    S, A = P.shape[0], P.shape[1]
    if r.shape != (S, A):
        return f"reward table has shape {r.shape}, expected {(S, A)}"
    if not np.all(np.isfinite(r)):
        return "reward table contains non-finite entries"
    if np.any(P < 0):
        s, a, _ = np.argwhere(P < 0)[0]
        return f"negative transition probability at (s={s},a={a})"
    rows = P.sum(axis=2)
    off = np.abs(rows - 1.0) > ROW_TOL
    if np.any(off):
        s, a = np.argwhere(off)[0]
        return f"row (s={s},a={a}) sums to {rows[s, a]:.6g}"
    if not 0.0 < mdp.discount < 1.0:
        return "discount out of range"
    p0 = np.asarray(mdp.initial_dist)
    if p0.shape != (S,):
        return f"initial_dist has shape {p0.shape}, expected {(S,)}"
    if np.any(p0 < 0):
        return f"negative initial probability at s={np.argwhere(p0 < 0)[0][0]}"
    if abs(p0.sum() - 1.0) > ROW_TOL:
        return f"initial_dist sums to {p0.sum():.6g}"
    return None


def require_valid(mdp: TabularMdp) -> None:
    msg = validate_mdp(mdp)
    if msg is not None:
        raise MdpError(msg)


def logsumexp_rows(Q: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp with max-shift stabilization."""
    m = Q.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(Q - m).sum(axis=-1, keepdims=True)))[..., 0]


def softmax_rows(Q: np.ndarray) -> np.ndarray:
    z = np.exp(Q - Q.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def soft_value_iteration(
    mdp: TabularMdp,
    reward: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 100_000,
):
    """Solve the soft Bellman fixed point Q = r + gamma * P @ V with
    V = logsumexp(Q) row-wise.

    Returns (V, Q, pi) where pi is the row-wise softmax of Q.
    """
    require_valid(mdp)
    if tol <= 0:
        raise ValueError("tol must be positive")
    P, g = mdp.transition, mdp.discount
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_iter):
        V = logsumexp_rows(Q)
        Q_next = reward + g * P @ V
        if np.max(np.abs(Q_next - Q)) <= tol * (1 - g):
            Q = Q_next
            break
        Q = Q_next
    else:
        raise ConvergenceError(f"soft value iteration did not reach {tol} in {max_iter} iters")
    V = logsumexp_rows(Q)
    # polish: residual of the returned triple is <= tol by the contraction bound
    return V, Q, softmax_rows(Q)


def policy_value(mdp: TabularMdp, pi: np.ndarray, reward: np.ndarray) -> np.ndarray:
    """Exact (non-soft) state values of pi under `reward`: solves the linear
    Bellman system V = sum_a pi (r + gamma P V)."""
    P, g = mdp.transition, mdp.discount
    S = mdp.n_states
    # M[s, s'] = sum_a pi(a|s) P[s,a,s']
    M = np.einsum("sa,sat->st", pi, P)
    b = np.einsum("sa,sa->s", pi, reward)
    return np.linalg.solve(np.eye(S) - g * M, b)


def occupancy_measure(mdp: TabularMdp, pi: np.ndarray) -> np.ndarray:
    """Discounted state-action visitation distribution of pi (t = 0 convention,
    sums to 1).

    Solves the flow equations
        d(s) = (1-gamma) p0(s) + gamma * sum_{s~,a~} d(s~) pi(a~|s~) P(s|s~,a~)
    exactly, then rho(s,a) = d(s) pi(a|s).
    """
    require_valid(mdp)
    P, g = mdp.transition, mdp.discount
    S = mdp.n_states
    M = np.einsum("sa,sat->st", pi, P)  # state-to-state kernel under pi
    d = np.linalg.solve(np.eye(S) - g * M.T, (1 - g) * mdp.initial_dist)
    return d[:, None] * pi


def policy_return(mdp: TabularMdp, pi: np.ndarray, reward: np.ndarray) -> float:
    """Exact discounted return E[sum_t gamma^t r(s_t,a_t)] from the initial
    distribution; equals sum_{s,a} rho(s,a) r(s,a) / (1-gamma)."""
    rho = occupancy_measure(mdp, pi)
    return float(np.sum(rho * reward) / (1.0 - mdp.discount))


def policy_soft_value(Q: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """V^pi(s) = E_{a~pi}[Q(s,a) - log pi(a|s)], with 0*log 0 = 0."""
    logs = np.zeros_like(pi)
    np.log(pi, out=logs, where=pi > 0)
    return np.sum(pi * (Q - logs), axis=1)


def inverse_soft_bellman(Q: np.ndarray, pi: np.ndarray, mdp: TabularMdp) -> np.ndarray:
    """The inverse operator r(s,a) = Q(s,a) - gamma * E_{s'}[V^pi(s')].

    Composing the forward soft Bellman solve (for pi) with this operator is the
    identity on Q-tables.
    """
    Vpi = policy_soft_value(Q, pi)
    return Q - mdp.discount * (mdp.transition @ Vpi)


def forward_soft_bellman_solve(
    reward: np.ndarray,
    pi: np.ndarray,
    mdp: TabularMdp,
    tol: float = 1e-13,
    max_iter: int = 200_000,
) -> np.ndarray:
    """Fixed point of Q = r + gamma * P @ V^pi(Q) for a fixed policy.

    The map is a gamma-contraction, so the fixed point is unique; used as the
    oracle side of the inverse/forward duality checks.
    """
    P, g = mdp.transition, mdp.discount
    Q = np.zeros_like(reward)
    for _ in range(max_iter):
        Q_next = reward + g * P @ policy_soft_value(Q, pi)
        if np.max(np.abs(Q_next - Q)) <= tol * (1 - g):
            return Q_next
        Q = Q_next
    raise ConvergenceError("forward soft Bellman solve did not converge")


def uniform_policy(n_states: int, n_actions: int) -> np.ndarray:
    return np.full((n_states, n_actions), 1.0 / n_actions)


def random_mdp(n_states: int, n_actions: int, discount: float, rng: np.random.Generator) -> TabularMdp:
    """Dense random MDP with Dirichlet transition rows; rewards in [0, 1]."""
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    r = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    p0 = rng.dirichlet(np.ones(n_states))
    return TabularMdp(transition=P, true_reward=r, discount=discount, initial_dist=p0, name="random")


def random_policy(n_states: int, n_actions: int, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.ones(n_actions), size=n_states)
