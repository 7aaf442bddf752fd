"""Metrics and experiment aggregation: normalized scores, reward-recovery
correlations, and the seed-averaged comparison suite."""

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .baselines import BcConfig, bc_policy, train_nodm, train_noreg
from .datasets import (
    RankedDatasets,
    build_ranked_datasets,
    expert_policy,
    noisy_policy,
    sample_trajectories,
)
from .gridworld import GridworldConfig, make_gridworld, standard_suite
from .mdp import TabularMdp, policy_return, uniform_policy
from .objective import SprinqlConfig, recovered_reward, train_sprinql
from .reference import (
    PreferenceFitConfig,
    estimate_weights,
    fit_reference_reward,
    normalize_reference,
    observed_mask,
)

LAST_K_EVALS = 10
PROBE_NOISE = tuple(np.round(np.arange(0.0, 1.0, 0.1), 1))
PROBE_TRAJS_PER_LEVEL = 50

METHODS = ("sprinql", "noreg", "nodm", "bc-e", "bc-o", "bc-both", "w-bc")

DEFAULT_NOISE_LEVELS = (0.0, 0.4, 0.8)
DEFAULT_SIZES = (100, 1000, 2500)


@dataclass
class ExperimentResult:
    method: str
    env: str
    seed_scores: list
    weights: np.ndarray | None = None
    pearson: float = float("nan")
    spearman: float = float("nan")
    wall_s: float = 0.0
    error: str | None = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.seed_scores)) if self.seed_scores else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.seed_scores)) if len(self.seed_scores) >= 2 else float("nan")


def normalized_score(ret: float, random_ret: float, expert_ret: float) -> float:
    """Affine rescale: random policy -> 0, expert policy -> 100."""
    denom = expert_ret - random_ret
    if denom == 0:
        raise ValueError("expert and random returns coincide")
    return (ret - random_ret) / denom * 100.0


def evaluate_policy(
    mdp: TabularMdp,
    pi: np.ndarray,
    n_eval_episodes: int = 0,
    horizon: int = 200,
    seed: int = 0,
):
    """Exact mode (n_eval_episodes == 0): the exact discounted return.
    Sampled mode: mean discounted episodic return and its standard error."""
    if n_eval_episodes <= 0:
        return policy_return(mdp, pi, mdp.true_reward)
    rng = np.random.default_rng(seed)
    g = mdp.discount
    disc = g ** np.arange(horizon)
    rets = np.empty(n_eval_episodes)
    for ep in range(n_eval_episodes):
        s = int(rng.choice(mdp.n_states, p=mdp.initial_dist))
        total = 0.0
        for t in range(horizon):
            a = int(rng.choice(mdp.n_actions, p=pi[s]))
            total += disc[t] * mdp.true_reward[s, a]
            s = int(rng.choice(mdp.n_states, p=mdp.transition[s, a]))
        rets[ep] = total
    se = float(rets.std(ddof=1) / np.sqrt(n_eval_episodes)) if n_eval_episodes > 1 else 0.0
    return float(rets.mean()), se


def score_policy(mdp: TabularMdp, pi: np.ndarray) -> float:
    """Normalized score of pi with exact returns for all three policies."""
    expert_ret = policy_return(mdp, expert_policy(mdp), mdp.true_reward)
    random_ret = policy_return(mdp, uniform_policy(mdp.n_states, mdp.n_actions), mdp.true_reward)
    return normalized_score(policy_return(mdp, pi, mdp.true_reward), random_ret, expert_ret)


def reward_correlation(
    rhat: np.ndarray,
    mdp: TabularMdp,
    probe_noise=PROBE_NOISE,
    n_per_level: int = PROBE_TRAJS_PER_LEVEL,
    horizon: int = 40,
    seed: int = 0,
):
    """Sweep noise over the expert, collect trajectories, and correlate
    predicted vs true trajectory returns. Returns (pearson, spearman)."""
    if len(probe_noise) < 2:
        raise ValueError("need at least two probe noise levels")
    expert = expert_policy(mdp)
    pred, true = [], []
    for k, eps in enumerate(probe_noise):
        pi = noisy_policy(expert, float(eps))
        n_transitions = n_per_level * horizon
        trajs = sample_trajectories(mdp, pi, n_transitions, horizon, seed * 1000 + k)
        for t in trajs:
            pred.append(t.total_reward(rhat))
            true.append(t.total_reward(mdp.true_reward))
    pred, true = np.array(pred), np.array(true)
    if pred.std() == 0 or true.std() == 0:
        raise ValueError("degenerate return pool: zero variance")
    pearson = float(np.corrcoef(pred, true)[0, 1])
    spearman = float(stats.spearmanr(pred, true).statistic)
    return pearson, spearman


@dataclass(frozen=True)
class SuiteConfig:
    env_names: tuple = ("grid4", "grid5", "grid6")
    methods: tuple = METHODS
    seeds: tuple = (0, 1, 2, 3, 4)
    noise_levels: tuple = DEFAULT_NOISE_LEVELS
    sizes: tuple = DEFAULT_SIZES
    sprinql: SprinqlConfig = SprinqlConfig()
    reference: PreferenceFitConfig = PreferenceFitConfig()
    with_correlation: bool = True


@dataclass
class PreparedRun:
    """Everything shared by all methods for one (env, seed) cell."""

    mdp: TabularMdp
    env_cfg: GridworldConfig
    data: RankedDatasets
    rbar: np.ndarray
    weights: np.ndarray
    expert_ret: float
    random_ret: float


def prepare_run(env_cfg: GridworldConfig, seed: int, suite: SuiteConfig) -> PreparedRun:
    """Generate the dataset and fit the reference reward once per cell."""
    mdp = make_gridworld(env_cfg)
    data = build_ranked_datasets(
        mdp, suite.noise_levels, suite.sizes, env_cfg.horizon, seed, env_name=env_cfg.name
    )
    ref_cfg = PreferenceFitConfig(
        iterations=suite.reference.iterations,
        step_size=suite.reference.step_size,
        pairs_per_batch=suite.reference.pairs_per_batch,
        within_coeff=suite.reference.within_coeff,
        seed=seed,
        length_normalize=suite.reference.length_normalize,
    )
    raw_rbar, _ = fit_reference_reward(data, mdp.n_states, mdp.n_actions, ref_cfg)
    mask = observed_mask(data, mdp.n_states, mdp.n_actions)
    rbar = normalize_reference(raw_rbar, mask)
    weights = estimate_weights(rbar, data)
    expert_ret = policy_return(mdp, expert_policy(mdp), mdp.true_reward)
    random_ret = policy_return(
        mdp, uniform_policy(mdp.n_states, mdp.n_actions), mdp.true_reward
    )
    return PreparedRun(mdp, env_cfg, data, rbar, weights, expert_ret, random_ret)


def run_method(run: PreparedRun, method: str, suite: SuiteConfig, seed: int):
    """Train one method on a prepared cell.

    Returns (score, pi, Q-or-None, weights-or-None, eval_trace). The score
    follows the aggregation protocol: mean of the last LAST_K_EVALS
    evaluation scores for iterative methods, the single exact score for BC.
    """
    mdp, data = run.mdp, run.data
    S, A, g = mdp.n_states, mdp.n_actions, mdp.discount

    def score_fn(Q):
        from .objective import soft_policy

        ret = policy_return(mdp, soft_policy(Q), mdp.true_reward)
        return normalized_score(ret, run.random_ret, run.expert_ret)

    cfg = SprinqlConfig(
        alpha=suite.sprinql.alpha,
        beta=suite.sprinql.beta,
        step_size=suite.sprinql.step_size,
        iterations=suite.sprinql.iterations,
        mu=suite.sprinql.mu,
        seed=seed,
        n_evals=suite.sprinql.n_evals,
    )
    if method == "sprinql":
        Q, pi, diags = train_sprinql(data, run.rbar, run.weights, cfg, S, A, g, eval_fn=score_fn)
    elif method == "noreg":
        Q, pi, diags = train_noreg(data, run.weights, cfg, S, A, g, eval_fn=score_fn)
    elif method == "nodm":
        Q, pi, diags = train_nodm(data, run.rbar, run.weights, cfg, S, A, g, eval_fn=score_fn)
    elif method in ("bc-e", "bc-o", "bc-both", "w-bc"):
        selector = {
            "bc-e": "expert-only",
            "bc-o": "suboptimal-only",
            "bc-both": "all",
            "w-bc": "weighted",
        }[method]
        pi = bc_policy(data, S, A, BcConfig(level_selector=selector), weights=run.weights)
        return score_policy_from(run, pi), pi, None, None, []
    else:
        raise ValueError(f"unknown method '{method}'")
    trace = diags.eval_scores
    score = float(np.mean(trace[-LAST_K_EVALS:])) if trace else score_policy_from(run, pi)
    return score, pi, Q, run.weights, trace


def score_policy_from(run: PreparedRun, pi: np.ndarray) -> float:
    ret = policy_return(run.mdp, pi, run.mdp.true_reward)
    return normalized_score(ret, run.random_ret, run.expert_ret)


def run_comparison(suite: SuiteConfig | None = None, progress=None):
    """Run the full methods x environments x seeds grid.

    Returns a list of ExperimentResult, one per (method, env). Failures are
    recorded per cell without aborting the suite.
    """
    suite = suite or SuiteConfig()
    by_name = {c.name: c for c in standard_suite()}
    results = {(m, e): ExperimentResult(m, e, []) for m in suite.methods for e in suite.env_names}
    for env in suite.env_names:
        for seed in suite.seeds:
            try:
                run = prepare_run(by_name[env], seed, suite)
            except Exception as exc:  # a bad cell must not kill the suite
                for m in suite.methods:
                    results[(m, env)].error = f"prepare failed: {exc}"
                continue
            for method in suite.methods:
                t0 = time.perf_counter()
                res = results[(method, env)]
                try:
                    score, pi, Q, w, _ = run_method(run, method, suite, seed)
                    res.seed_scores.append(score)
                    res.weights = w if w is not None else res.weights
                    if suite.with_correlation and Q is not None:
                        rhat = recovered_reward(Q, run.mdp)
                        res.pearson, res.spearman = reward_correlation(rhat, run.mdp, seed=seed)
                except Exception as exc:
                    res.error = str(exc)
                res.wall_s += time.perf_counter() - t0
                if progress is not None:
                    progress(method, env, seed, res)
    return [results[(m, e)] for m in suite.methods for e in suite.env_names]


def results_csv(results) -> str:
    """CSV with one row per (method, env) aggregate."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "env", "n_seeds", "mean", "std", "pearson", "spearman", "wall_s", "error"])
    for r in results:
        w.writerow(
            [
                r.method,
                r.env,
                len(r.seed_scores),
                f"{r.mean:.4f}",
                f"{r.std:.4f}",
                f"{r.pearson:.4f}",
                f"{r.spearman:.4f}",
                f"{r.wall_s:.2f}",
                r.error or "",
            ]
        )
    return buf.getvalue()


def results_table(results) -> str:
    """Aligned text table, methods as rows and environments as columns."""
    envs = sorted({r.env for r in results})
    methods = []
    for r in results:
        if r.method not in methods:
            methods.append(r.method)
    cell = {(r.method, r.env): r for r in results}
    width = 16
    lines = ["method".ljust(10) + "".join(e.rjust(width) for e in envs)]
    for m in methods:
        row = m.ljust(10)
        for e in envs:
            r = cell.get((m, e))
            if r is None or not r.seed_scores:
                row += "-".rjust(width)
            else:
                row += f"{r.mean:.1f} +/- {r.std:.1f}".rjust(width)
        lines.append(row)
    return "\n".join(lines)
