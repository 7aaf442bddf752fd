import numpy as np
import pytest

from conftest import chain_mdp
from sprinql.evaluation import (
    LAST_K_EVALS,
    SuiteConfig,
    evaluate_policy,
    normalized_score,
    prepare_run,
    results_csv,
    reward_correlation,
    run_comparison,
    run_method,
    score_policy_from,
)
from sprinql.gridworld import GridworldConfig, make_gridworld
from sprinql.mdp import TabularMdp, uniform_policy
from sprinql.objective import SprinqlConfig
from sprinql.reference import PreferenceFitConfig


class TestNormalizedScore:
    def test_endpoints_and_midpoint(self):
        assert normalized_score(7.0, 2.0, 7.0) == 100.0
        assert normalized_score(2.0, 2.0, 7.0) == 0.0
        assert abs(normalized_score(4.5, 2.0, 7.0) - 50.0) < 1e-12

    def test_affine_in_return(self):
        # two points pin the affine map; a third must fall on the same line
        r0, re = 1.0, 9.0
        s = lambda x: normalized_score(x, r0, re)
        slope = (s(5.0) - s(3.0)) / 2.0
        assert abs(s(8.0) - (s(3.0) + slope * 5.0)) < 1e-9

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            normalized_score(1.0, 3.0, 3.0)


class TestEvaluatePolicy:
    def test_zero_reward(self):
        m = chain_mdp()
        zero = TabularMdp(m.transition, np.zeros_like(m.true_reward), m.discount, m.initial_dist)
        pi = uniform_policy(3, 2)
        assert evaluate_policy(zero, pi) == 0.0
        mean, se = evaluate_policy(zero, pi, n_eval_episodes=100)
        assert mean == 0.0 and se == 0.0

    def test_sampled_matches_exact(self):
        m = chain_mdp()
        pi = uniform_policy(3, 2)
        exact = evaluate_policy(m, pi)
        mean, se = evaluate_policy(m, pi, n_eval_episodes=10_000, horizon=200, seed=1)
        assert abs(mean - exact) < 3 * se

    def test_deterministic_zero_variance(self):
        # deterministic dynamics and policy: every episode is identical
        S, A = 3, 2
        P = np.zeros((S, A, S))
        for s in range(S):
            P[s, 0, (s + 1) % S] = 1.0
            P[s, 1, s] = 1.0
        r = np.ones((S, A))
        p0 = np.zeros(S)
        p0[0] = 1.0
        m = TabularMdp(P, r, 0.9, p0)
        pi = np.zeros((S, A))
        pi[:, 0] = 1.0
        _, se = evaluate_policy(m, pi, n_eval_episodes=50, horizon=30)
        assert se == 0.0


class TestRewardCorrelation:
    def _mdp(self):
        return make_gridworld(
            GridworldConfig(width=3, height=3, goals=((2, 2, 1.0),), horizon=20, discount=0.9)
        )

    def test_true_reward_perfect(self):
        m = self._mdp()
        p, s = reward_correlation(m.true_reward, m, n_per_level=10, horizon=20)
        assert abs(p - 1.0) < 1e-12 and abs(s - 1.0) < 1e-12

    def test_affine_invariance(self):
        m = self._mdp()
        p, _ = reward_correlation(3.0 * m.true_reward + 2.0, m, n_per_level=10, horizon=20)
        assert abs(p - 1.0) < 1e-12

    def test_sign_flip(self):
        m = self._mdp()
        p, s = reward_correlation(-m.true_reward, m, n_per_level=10, horizon=20)
        assert abs(p + 1.0) < 1e-12 and abs(s + 1.0) < 1e-12

    def test_degenerate_pool_rejected(self):
        m = self._mdp()
        with pytest.raises(ValueError):
            reward_correlation(np.zeros((9, 4)), m, n_per_level=5, horizon=10)


def _small_suite(**kw):
    defaults = dict(
        env_names=("grid4",),
        methods=("sprinql", "bc-both"),
        seeds=(0,),
        sizes=(60, 120, 240),
        sprinql=SprinqlConfig(iterations=150),
        reference=PreferenceFitConfig(iterations=100),
        with_correlation=False,
    )
    defaults.update(kw)
    return SuiteConfig(**defaults)


class TestSuite:
    def test_single_cell_deterministic(self):
        suite = _small_suite()
        a = run_comparison(suite)
        b = run_comparison(suite)
        for ra, rb in zip(a, b):
            assert ra.seed_scores == rb.seed_scores
            assert (ra.method, ra.env, ra.error) == (rb.method, rb.env, rb.error)

    def test_last_k_aggregation(self):
        suite = _small_suite()
        run = prepare_run(_grid4_cfg(), 0, suite)
        score, _, _, _, trace = run_method(run, "sprinql", suite, 0)
        assert len(trace) >= LAST_K_EVALS
        assert abs(score - float(np.mean(trace[-LAST_K_EVALS:]))) < 1e-12

    def test_bc_scores_match_direct_policy_score(self):
        suite = _small_suite()
        run = prepare_run(_grid4_cfg(), 0, suite)
        score, pi, Q, w, trace = run_method(run, "bc-both", suite, 0)
        assert Q is None and trace == []
        assert abs(score - score_policy_from(run, pi)) < 1e-12

    def test_failures_recorded_not_raised(self):
        suite = _small_suite(methods=("sprinql", "definitely-not-a-method"))
        results = run_comparison(suite)
        bad = [r for r in results if r.method == "definitely-not-a-method"]
        good = [r for r in results if r.method == "sprinql"]
        assert bad[0].error is not None
        assert good[0].error is None and len(good[0].seed_scores) == 1

    def test_csv_layout(self):
        results = run_comparison(_small_suite())
        lines = results_csv(results).strip().splitlines()
        assert lines[0].startswith("method,env,n_seeds,mean,std")
        assert len(lines) == 1 + 2  # header + 2 (method, env) rows


def _grid4_cfg():
    from sprinql.gridworld import suite_config

    return suite_config("grid4")
