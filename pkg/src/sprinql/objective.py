"""The core training objective: occupancy matching over weighted expertise
levels, a reference-reward regularizer with its ReLU lower-bound surrogate,
a conservative Q penalty, analytic gradients, and projected gradient ascent
over non-negative tabular Q.

Conventions. The inverse soft Bellman residual used inside the regularizer
is Q(s,a) - rbar(s,a) - gamma * V(s'), carrying the discount through the
squared expansion so that the surrogate's equality case (Q <= rbar
entrywise) holds exactly. Expectations are taken over per-level transition
samples, either with the sampled next state (default, matching offline
training) or with the exact transition kernel (oracle mode).
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import RankedDatasets
from .mdp import TabularMdp, logsumexp_rows, policy_soft_value, softmax_rows

MAX_HALVINGS = 60
DIVERGENCE_PATIENCE = 10


class ObjectiveError(Exception):
    pass


@dataclass(frozen=True)
class SprinqlConfig:
    alpha: float = 1.0  # reward-regularizer temperature
    beta: float = 1.0  # conservative temperature
    step_size: float = 1e-2
    iterations: int = 3000
    projection_floor: float = 0.0
    mu: str = "uniform"  # conservative sampling dist: uniform | policy
    seed: int = 0
    n_evals: int = 50  # diagnostic evaluations spread over training

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")


@dataclass
class EmpiricalExpectations:
    """Per-level (s, a, s') samples with level weights, plus what is needed
    to evaluate either the sampled or the exact next-state expectation."""

    levels: list  # [(s_idx, a_idx, sp_idx)]
    weights: np.ndarray
    gamma: float
    n_states: int
    n_actions: int
    transition: np.ndarray | None = field(default=None)  # set => exact mode

    @property
    def exact(self) -> bool:
        return self.transition is not None

    @classmethod
    def from_data(
        cls,
        data: RankedDatasets,
        weights: np.ndarray,
        gamma: float,
        n_states: int,
        n_actions: int,
        transition: np.ndarray | None = None,
    ) -> "EmpiricalExpectations":
        weights = np.asarray(weights, dtype=float)
        if len(weights) != data.n_levels:
            raise ObjectiveError("one weight per expertise level required")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ObjectiveError("weights must be a distribution")
        levels = [data.flat_transitions(i) for i in range(data.n_levels)]
        return cls(levels, weights, gamma, n_states, n_actions, transition)

    def union_states(self) -> np.ndarray:
        return np.concatenate([s for s, _, _ in self.levels])


def soft_policy(Q: np.ndarray) -> np.ndarray:
    """Row-wise softmax of Q; the closed-form inner minimizer."""
    return softmax_rows(Q)


def soft_value(Q: np.ndarray) -> np.ndarray:
    """V(s) = logsumexp over actions of Q(s, .)."""
    return logsumexp_rows(Q)


def _require_nonneg(Q: np.ndarray, floor: float = 0.0) -> None:
    if np.min(Q) < floor - 1e-12:
        raise ObjectiveError("Q table has entries below the non-negativity floor")


def _next_values(V: np.ndarray, sp_idx: np.ndarray, s_idx, a_idx, exp: EmpiricalExpectations) -> np.ndarray:
    """E_{s'}[V(s')] per sample: exact kernel average or the sampled s'."""
    if exp.exact:
        return exp.transition[s_idx, a_idx] @ V
    return V[sp_idx]


def _objective_terms(Q, Vpi, rbar, exp: EmpiricalExpectations, alpha, relu: bool):
    """Shared evaluator for the two-argument objectives and the compact form.

    Returns (matching, regularizer) where the objective value is
    matching - alpha * regularizer. With relu=False the regularizer is the
    plain squared residual (Q - rbar - gamma V')^2; with relu=True it is the
    expanded surrogate with the signed cross term replaced by
    2 ReLU(rbar - Q) gamma V'.
    """
    g = exp.gamma
    matching = 0.0
    regularizer = 0.0
    for w, (s_idx, a_idx, sp_idx) in zip(exp.weights, exp.levels):
        q = Q[s_idx, a_idx]
        vp = _next_values(Vpi, sp_idx, s_idx, a_idx, exp)
        # E[T^pi Q] - E[V(s) - gamma V(s')]  (the gamma V' parts cancel)
        matching += w * float(np.mean(q - Vpi[s_idx]))
        rb = rbar[s_idx, a_idx]
        if relu:
            res = (q - rb) ** 2 + (g * vp) ** 2 + 2.0 * np.maximum(rb - q, 0.0) * g * vp
        else:
            res = (q - rb - g * vp) ** 2
        regularizer += w * float(np.mean(res))
    return matching, regularizer


def h_original(Q, pi, exp: EmpiricalExpectations, rbar, cfg: SprinqlConfig) -> float:
    """The exact two-argument objective: occupancy matching minus
    alpha * squared inverse-Bellman residual to the reference reward."""
    Vpi = policy_soft_value(Q, pi)
    matching, reg = _objective_terms(Q, Vpi, rbar, exp, cfg.alpha, relu=False)
    return matching - cfg.alpha * reg


def h_hat(Q, pi, exp: EmpiricalExpectations, rbar, cfg: SprinqlConfig) -> float:
    """The surrogate objective: lower-bounds h_original whenever Q >= 0,
    with equality when Q <= rbar entrywise. Requires Q >= 0."""
    _require_nonneg(Q)
    Vpi = policy_soft_value(Q, pi)
    matching, reg = _objective_terms(Q, Vpi, rbar, exp, cfg.alpha, relu=True)
    return matching - cfg.alpha * reg


def conservative_penalty(Q, exp: EmpiricalExpectations, cfg: SprinqlConfig) -> float:
    """mu-average of Q over dataset states (union of levels)."""
    states = exp.union_states()
    if cfg.mu == "uniform":
        return float(np.mean(Q[states].mean(axis=1)))
    if cfg.mu == "policy":
        pi = soft_policy(Q)
        return float(np.mean(np.sum(pi[states] * Q[states], axis=1)))
    raise ObjectiveError(f"unknown mu choice '{cfg.mu}'")


def conservative_value(Q, pi, exp: EmpiricalExpectations, rbar, cfg: SprinqlConfig) -> float:
    """h_hat minus beta times the mu-average of Q over dataset states."""
    return h_hat(Q, pi, exp, rbar, cfg) - cfg.beta * conservative_penalty(Q, exp, cfg)


def gamma_hat(
    Q,
    exp: EmpiricalExpectations,
    rbar,
    cfg: SprinqlConfig,
    dm: bool = True,
    exact_residual: bool = False,
) -> float:
    """Compact closed form of min_pi h_hat: V^pi replaced by V^Q.

    Concave over Q >= 0. dm=False drops the occupancy-matching term (the
    ablation that reduces to regression toward the reference reward).
    exact_residual=True swaps the ReLU surrogate for the plain squared
    inverse-Bellman residual (Q - rbar - gamma V')^2 -- genuine soft
    Q-learning toward rbar, at the cost of concavity; only meaningful
    together with dm=False."""
    _require_nonneg(Q)
    V = soft_value(Q)
    matching, reg = _objective_terms(Q, V, rbar, exp, cfg.alpha, relu=not exact_residual)
    return (matching if dm else 0.0) - cfg.alpha * reg


def gamma_hat_conservative(
    Q, exp, rbar, cfg: SprinqlConfig, dm: bool = True, exact_residual: bool = False
) -> float:
    return gamma_hat(
        Q, exp, rbar, cfg, dm=dm, exact_residual=exact_residual
    ) - cfg.beta * conservative_penalty(Q, exp, cfg)


def gamma_hat_gradient(
    Q,
    exp: EmpiricalExpectations,
    rbar,
    cfg: SprinqlConfig,
    dm: bool = True,
    exact_residual: bool = False,
) -> np.ndarray:
    """Analytic gradient of gamma_hat_conservative w.r.t. every Q entry.

    At ReLU kinks (rbar == Q) the inactive-branch subgradient (0) is used.
    """
    _require_nonneg(Q)
    g = exp.gamma
    V = soft_value(Q)
    pi = soft_policy(Q)  # dV/dQ rows
    grad = np.zeros_like(Q)

    for w, (s_idx, a_idx, sp_idx) in zip(exp.weights, exp.levels):
        n = len(s_idx)
        c = w / n
        q = Q[s_idx, a_idx]
        rb = rbar[s_idx, a_idx]
        if dm:
            # d/dQ of mean(q - V(s)): e_{s,a} minus the softmax row at s
            np.add.at(grad, (s_idx, a_idx), np.full(n, c))
            np.add.at(grad, s_idx, -c * pi[s_idx])
        if cfg.alpha > 0:
            vp = _next_values(V, sp_idx, s_idx, a_idx, exp)
            if exact_residual:
                diff = q - rb - g * vp
                dq = 2.0 * diff
                dvp = -2.0 * g * diff
            else:
                relu_act = rb > q  # strict: zero subgradient at the kink
                # d residual / d q
                dq = 2.0 * (q - rb) - 2.0 * np.where(relu_act, g * vp, 0.0)
                # d residual / d V(s')
                dvp = 2.0 * g * g * vp + 2.0 * g * np.where(relu_act, rb - q, 0.0)
            np.add.at(grad, (s_idx, a_idx), -cfg.alpha * c * dq)
            # V(s') contribution flows through the softmax rows
            if exp.exact:
                # vp = P[s,a] @ V: weight flows to every successor's softmax row
                succ_w = (-cfg.alpha * c * dvp) @ exp.transition[s_idx, a_idx]
                grad += succ_w[:, None] * pi
            else:
                np.add.at(grad, sp_idx, (-cfg.alpha * c * dvp)[:, None] * pi[sp_idx])

    if cfg.beta > 0:
        states = exp.union_states()
        if cfg.mu == "uniform":
            np.add.at(grad, states, -cfg.beta / (len(states) * Q.shape[1]) * np.ones((len(states), Q.shape[1])))
        elif cfg.mu == "policy":
            # d/dQ of sum_a pi(a|s) Q(s,a) with pi = softmax(Q)
            qs = Q[states]
            ps = pi[states]
            ev = np.sum(ps * qs, axis=1, keepdims=True)
            np.add.at(grad, states, -cfg.beta / len(states) * (ps + ps * (qs - ev)))
        else:
            raise ObjectiveError(f"unknown mu choice '{cfg.mu}'")
    return grad


def recovered_reward(Q: np.ndarray, mdp: TabularMdp) -> np.ndarray:
    """r_hat = Q - gamma * E_{s'}[V(s')] with exact transitions, at pi = softmax(Q)."""
    V = soft_value(Q)
    return Q - mdp.discount * (mdp.transition @ V)


@dataclass
class TrainDiagnostics:
    objective: list
    grad_norm: list
    eval_iters: list
    eval_scores: list  # filled by callers that pass an eval callback


def train_sprinql(
    data: RankedDatasets,
    rbar: np.ndarray,
    weights: np.ndarray,
    cfg: SprinqlConfig,
    n_states: int,
    n_actions: int,
    gamma: float,
    eval_fn=None,
    dm: bool = True,
    exact_residual: bool = False,
):
    """Projected gradient ascent on the conservative surrogate objective.

    Q is clamped at the projection floor after every step; the step size
    halves whenever a step would decrease the objective (and re-grows on
    success). Returns (Q, pi, diagnostics). eval_fn(Q) -> float, if given,
    is called at n_evals evenly spaced iterations.
    """
    exp = EmpiricalExpectations.from_data(data, weights, gamma, n_states, n_actions)
    Q = np.zeros((n_states, n_actions))
    step = cfg.step_size
    diags = TrainDiagnostics([], [], [], [])
    eval_every = max(1, cfg.iterations // max(1, cfg.n_evals))
    obj = gamma_hat_conservative(Q, exp, rbar, cfg, dm=dm, exact_residual=exact_residual)
    worse_streak = 0
    for it in range(cfg.iterations):
        grad = gamma_hat_gradient(Q, exp, rbar, cfg, dm=dm, exact_residual=exact_residual)
        for _ in range(MAX_HALVINGS):
            cand = np.maximum(Q + step * grad, cfg.projection_floor)
            cand_obj = gamma_hat_conservative(cand, exp, rbar, cfg, dm=dm, exact_residual=exact_residual)
            if cand_obj >= obj - 1e-12:
                break
            step *= 0.5
        else:
            cand, cand_obj = Q, obj  # no acceptable step at any scale: stay put
        if cand_obj < obj - 1e-9:
            worse_streak += 1
            if worse_streak >= DIVERGENCE_PATIENCE:
                raise ObjectiveError("objective diverging despite backtracking")
        else:
            worse_streak = 0
        Q, obj = cand, cand_obj
        step *= 1.5
        diags.objective.append(obj)
        diags.grad_norm.append(float(np.linalg.norm(grad)))
        if eval_fn is not None and ((it + 1) % eval_every == 0 or it == cfg.iterations - 1):
            diags.eval_iters.append(it + 1)
            diags.eval_scores.append(float(eval_fn(Q)))
    return Q, soft_policy(Q), diags


def counterexample_search(
    gamma: float = 0.9,
    alpha: float = 50.0,
    q_scale: float = 8.0,
    n_policies: int = 400,
    seed: int = 0,
) -> dict:
    """Search a 2-state/2-action instance with Q >> rbar for (a) a policy
    direction where the exact objective violates convexity, (b) a policy
    beating pi^Q at minimizing it, and (c) confirmation that the surrogate
    is still minimized at pi^Q.

    Returns a witness report dict; entries are None when nothing was found
    within the budget.
    """
    rng = np.random.default_rng(seed)
    S, A = 2, 2
    P = rng.dirichlet(np.ones(S), size=(S, A))
    rbar = np.zeros((S, A))
    Q = np.full((S, A), q_scale) + rng.uniform(0, 0.5, (S, A))
    cfg = SprinqlConfig(alpha=alpha, beta=0.0)
    s_idx = np.repeat(np.arange(S), A)
    a_idx = np.tile(np.arange(A), S)
    exp = EmpiricalExpectations(
        levels=[(s_idx, a_idx, s_idx)], weights=np.array([1.0]),
        gamma=gamma, n_states=S, n_actions=A, transition=P,
    )

    piQ = soft_policy(Q)
    h_at_piQ = h_original(Q, piQ, exp, rbar, cfg)
    report = {"nonconvexity": None, "better_than_piQ": None, "surrogate_min_at_piQ": True}
    hhat_at_piQ = h_hat(Q, piQ, exp, rbar, cfg)
    for _ in range(n_policies):
        pi1 = rng.dirichlet(np.ones(A), size=S)
        pi2 = rng.dirichlet(np.ones(A), size=S)
        mid = 0.5 * (pi1 + pi2)
        h1, h2 = h_original(Q, pi1, exp, rbar, cfg), h_original(Q, pi2, exp, rbar, cfg)
        hm = h_original(Q, mid, exp, rbar, cfg)
        if report["nonconvexity"] is None and hm > 0.5 * (h1 + h2) + 1e-9:
            report["nonconvexity"] = {"pi1": pi1, "pi2": pi2, "gap": hm - 0.5 * (h1 + h2)}
        if report["better_than_piQ"] is None and h1 < h_at_piQ - 1e-9:
            report["better_than_piQ"] = {"pi": pi1, "gap": h_at_piQ - h1}
        if h_hat(Q, pi1, exp, rbar, cfg) < hhat_at_piQ - 1e-10:
            report["surrogate_min_at_piQ"] = False
    return report
