import numpy as np
import pytest

from bandit_meta import rng as rngmod
from bandit_meta.arms import BanditProblem, Bernoulli
from bandit_meta.eda import (
    EdaConfig,
    eda_optimize,
    evaluate_delta,
    learn_power,
    scalar_objective,
    tune_policy,
)
from bandit_meta.policies import UCB1


class OraclePolicy:
    """Index = the problem's true means (test-only, batch protocol)."""

    extra_uniform_rows = 0
    spec_string = "oracle"

    def __init__(self, true_means):
        self.true_means = np.asarray(true_means)

    def init_state(self, n, k):
        return None

    def select(self, state, t, counts, means, stds, ws):
        idx = np.broadcast_to(self.true_means, means.shape)
        return idx.argmax(axis=1) + np.zeros(means.shape[0], dtype=np.int64)


class TestEdaOptimize:
    def test_quadratic_reaches_optimum(self):
        objective = lambda pop, it: (pop[:, 0] - 3.0) ** 2 + (pop[:, 1] + 1.0) ** 2
        result = eda_optimize(objective, EdaConfig(dim=2, seed=5))
        assert np.max(np.abs(result.best_theta - np.array([3.0, -1.0]))) < 0.05

    def test_constant_objective_returns_first_candidate(self):
        config = EdaConfig(dim=3, seed=11)
        result = eda_optimize(lambda pop, it: np.zeros(pop.shape[0]), config)
        g = rngmod.derive_rng(11, rngmod.EDA_SAMPLING, 0)
        first = g.standard_normal((config.n_p, 3))[0]
        assert result.best_score == 0.0
        assert np.array_equal(result.best_theta, first)

    def test_no_selection_pressure_still_terminates(self):
        config = EdaConfig(dim=2, i_max=5, n_p=20, b=20, seed=2)
        result = eda_optimize(lambda pop, it: (pop ** 2).sum(axis=1), config)
        assert np.isfinite(result.best_score)
        assert len(result.trace) == 5

    def test_best_score_is_a_running_minimum(self):
        objective = lambda pop, it: (pop ** 2).sum(axis=1)
        result = eda_optimize(objective, EdaConfig(dim=4, seed=7, i_max=40))
        scores = [it.best_score for it in result.trace]
        assert all(a >= b for a, b in zip(scores, scores[1:]))

    def test_nonfinite_scores_are_worst(self):
        def objective(pop, it):
            s = (pop ** 2).sum(axis=1)
            s[::2] = np.nan
            return s

        result = eda_optimize(objective, EdaConfig(dim=2, seed=3, i_max=10))
        assert np.isfinite(result.best_score)

    def test_collapsed_coordinate_stays_collapsed(self):
        # once a coordinate's variance underflows to exactly 0, every later
        # sample in that coordinate is identical
        objective = lambda pop, it: (pop ** 2).sum(axis=1)
        result = eda_optimize(objective, EdaConfig(dim=1, seed=9, i_max=600, n_p=40))
        variances = np.array([it.variances[0] for it in result.trace])
        collapsed = np.where(variances == 0.0)[0]
        assert collapsed.size > 0
        first = collapsed[0]
        means_after = np.array([it.means[0] for it in result.trace[first:]])
        assert np.all(variances[first:] == 0.0)
        assert np.all(means_after == means_after[0])

    def test_deterministic_given_seed(self):
        objective = lambda pop, it: (pop ** 2).sum(axis=1)
        a = eda_optimize(objective, EdaConfig(dim=3, seed=21, i_max=15))
        b = eda_optimize(objective, EdaConfig(dim=3, seed=21, i_max=15))
        assert np.array_equal(a.best_theta, b.best_theta)
        for ia, ib in zip(a.trace, b.trace):
            assert np.array_equal(ia.means, ib.means)
            assert np.array_equal(ia.variances, ib.variances)

    def test_sphere_in_sixteen_dimensions(self):
        objective = lambda pop, it: (pop ** 2).sum(axis=1)
        good = sum(
            eda_optimize(objective, EdaConfig(dim=16, seed=s)).best_score < 1e-2
            for s in range(10)
        )
        assert good >= 9

    def test_scalar_objective_adapter(self):
        objective = scalar_objective(lambda theta: float((theta ** 2).sum()))
        result = eda_optimize(objective, EdaConfig(dim=2, seed=1, i_max=20))
        assert result.best_score < 0.1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EdaConfig(dim=0)
        with pytest.raises(ValueError):
            EdaConfig(dim=2, n_p=10, b=11)


class TestEvaluateDelta:
    def test_oracle_policy_hand_trace(self):
        problem = BanditProblem.from_arms([Bernoulli(1.0), Bernoulli(0.0)])
        policy = OraclePolicy(problem.true_means)
        # only the forced initialization pull of arm 2 costs anything
        assert evaluate_delta(policy, [problem], 10, 3) == 1.0

    def test_identical_copies_average_distinct_episode_seeds(self):
        problem = BanditProblem.from_arms([Bernoulli(0.6), Bernoulli(0.4)])
        policy = UCB1(C=2.0)
        from bandit_meta.episodes import simulate_batch
        n = 8
        delta = evaluate_delta(policy, [problem] * n, 50, 13)
        rngs = [rngmod.derive_rng(13, rngmod.DELTA, i) for i in range(n)]
        manual = simulate_batch([problem] * n, policy, 50, rngs).regrets.mean()
        assert delta == manual

    def test_ucb1_training_delta_matches_table_scale(self, train_problems):
        delta = evaluate_delta(UCB1(C=2.0), train_problems, 100, 7)
        assert delta == pytest.approx(5.6, abs=0.8)

    def test_empty_problems_rejected(self):
        with pytest.raises(ValueError):
            evaluate_delta(UCB1(), [], 10, 1)


class TestTuning:
    def test_tuned_ucb1_beats_default_on_training(self, train_problems):
        result = tune_policy("ucb1", train_problems, 100, 42, i_max=15)
        baseline = np.mean([
            evaluate_delta(UCB1(C=2.0), train_problems, 100, 100 + r)
            for r in range(20)
        ])
        assert result.best_delta < baseline
        assert 0.0 < result.params[0] < 1.0  # far from the default 2.0

    def test_tune_result_spec_string_parses(self, train_problems):
        from bandit_meta.policies import parse_policy
        result = tune_policy("ucb1", train_problems, 50, 4, i_max=3, n_p=12, b=3)
        policy = parse_policy(result.policy_spec)
        assert policy.spec_string == result.policy_spec

    def test_unknown_kind_rejected(self, train_problems):
        with pytest.raises(ValueError):
            tune_policy("ucb1tuned", train_problems, 50, 1)

    def test_learn_power_returns_valid_theta(self, train_problems):
        result = learn_power(1, train_problems[:20], 30, 5, i_max=3, n_p=16, b=4)
        assert result.theta.theta.shape == (16,)
        assert np.isfinite(result.best_delta)
