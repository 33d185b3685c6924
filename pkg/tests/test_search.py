import numpy as np
import pytest

from bandit_meta import rng as rngmod
from bandit_meta.arms import BanditProblem, Bernoulli
from bandit_meta.formulas import parse_formula
from bandit_meta.search import (
    MetaBandit,
    default_reward,
    search_best,
    uniform_race,
)


def problem(p1, p2):
    return BanditProblem.from_arms([Bernoulli(p1), Bernoulli(p2)])


class TestMetaPull:
    def test_greedy_on_deterministic_problem(self):
        mb = MetaBandit([parse_formula("rbar")], [problem(1.0, 0.0)], 10, seed=3)
        assert mb.pull(0) == 0.9  # regret 1 -> 1 - 1/10

    def test_zero_regret_gives_reward_one(self):
        mb = MetaBandit([parse_formula("rbar")], [problem(1.0, 1.0)], 10, seed=3)
        assert mb.pull(0) == 1.0

    def test_problem_cycling_schedule(self):
        # two problems with deterministic regrets 1 and 0: rewards alternate
        problems = [problem(1.0, 0.0), problem(1.0, 1.0)]
        mb = MetaBandit([parse_formula("rbar")], problems, 10, seed=3)
        rewards = [mb.pull(0) for _ in range(5)]
        assert rewards == [0.9, 1.0, 0.9, 1.0, 0.9]

    def test_invalid_on_live_statistics_scores_zero(self):
        # 1/(tk - 2) blows up as soon as some arm reaches two plays
        mb = MetaBandit([parse_formula("inverse(sub(tk,2))")],
                        [problem(0.9, 0.1)], 10, seed=3)
        assert mb.pull(0) == 0.0

    def test_reward_clip(self):
        assert default_reward(-1.0, 10) == 1.0
        assert default_reward(20.0, 10) == 0.0
        assert default_reward(2.5, 10) == 0.75


class TestSearchBest:
    def test_budget_must_cover_initialization(self):
        with pytest.raises(ValueError):
            search_best([parse_formula("rbar")] * 3, [problem(0.9, 0.1)], 10, 2, 1)

    def test_budget_equal_arms_ranks_by_single_pull(self):
        formulas = [parse_formula(s) for s in ("rbar", "1", "opposite(rbar)")]
        result = search_best(formulas, [problem(0.9, 0.1)], 50, 3, 7)
        assert sum(r.pulls for r in result.ranking) == 3
        assert all(r.pulls == 1 for r in result.ranking)

    def test_total_pulls_equal_budget(self):
        formulas = [parse_formula(s) for s in ("rbar", "1")]
        result = search_best(formulas, [problem(0.8, 0.2)], 30, 500, 7)
        assert sum(r.pulls for r in result.ranking) == 500

    def test_separates_greedy_from_uniform(self):
        formulas = [parse_formula("rbar"), parse_formula("1")]
        result = search_best(formulas, [problem(0.9, 0.1)], 100, 2000, 5)
        assert result.best.expr == "rbar"
        gap = result.ranking[0].mean_reward - result.ranking[1].mean_reward
        assert gap >= 0.2

    def test_deterministic_ranking(self):
        formulas = [parse_formula(s) for s in
                    ("rbar", "1", "add(rbar,inverse(tk))", "opposite(tk)")]
        problems = [problem(0.7, 0.4), problem(0.2, 0.9)]
        a = search_best(formulas, problems, 40, 300, 11)
        b = search_best(formulas, problems, 40, 300, 11)
        assert [(r.expr, r.mean_reward, r.pulls) for r in a.ranking] == \
               [(r.expr, r.mean_reward, r.pulls) for r in b.ranking]

    def test_adaptive_concentrates_on_good_arms(self):
        formulas = [parse_formula("rbar"), parse_formula("1")]
        adaptive = search_best(formulas, [problem(0.9, 0.1)], 100, 1000, 5)
        flat = uniform_race(formulas, [problem(0.9, 0.1)], 100, 1000, 5)
        best_pulls = {r.expr: r.pulls for r in adaptive.ranking}
        assert best_pulls["rbar"] > 700
        assert {r.pulls for r in flat.ranking} == {500}


class TestSpeedupOverNaiveEvaluation:
    """The adaptive race orders the true top decile above the true bottom
    decile with at least five times fewer episodes than the naive protocol
    that Monte-Carlo-evaluates every formula on the full training schedule
    (one episode per training problem, 100 sweeps each, round-robin)."""

    HORIZON = 50
    SEEDS = range(8)

    @staticmethod
    def _setup():
        # Ten syntactically distinct copies of one strong explorer (the true
        # top decile), ten impostor copies that mimic it exactly but turn
        # INVALID when the weak arm's mean dips below 1/3 - 1/tk (the true
        # bottom decile: reward 0 on roughly a third of their episodes), and
        # eighty reliably-mediocre uniform/least-played fillers in between.
        core = "add(rbar,div(7,tk))"
        wraps = [core,
                 f"mul({core},1)", f"div({core},1)", f"min({core},{core})",
                 f"max({core},{core})", f"add({core},ln(1))", f"sub({core},ln(1))",
                 f"abs({core})", f"mul(1,{core})", f"add(ln(1),{core})"]
        trig = "ln(max(1,sqrt(sub(rbar,sub(inverse(3),inverse(tk))))))"
        impostors = [f"add({w},{trig})" for w in wraps]
        mid_templates = (
            "div({c},tk)", "opposite(mul(tk,{c}))", "{c}", "min(rbar,opposite({c}))",
            "add(div(1,tk),{c})", "opposite(add(tk,{c}))", "sub(div({c},tk),7)",
            "max(opposite(tk),opposite({c}))", "sub(min(1,div({c},tk)),2)",
            "opposite(div(tk,{c}))", "sub(inverse(tk),{c})", "div(inverse(tk),{c})",
            "min(div(1,tk),{c})", "opposite(max(tk,{c}))",
            "sub(div(2,tk),mul({c},2))", "add(inverse(tk),opposite({c}))",
        )
        middles = [tpl.format(c=c) for tpl in mid_templates for c in (1, 2, 3, 5, 7)][:80]
        formulas = [parse_formula(s) for s in wraps + middles + impostors]
        assert len(set(formulas)) == 100
        problems = [problem(0.95, 0.35), problem(0.93, 0.33), problem(0.9, 0.3)]
        return formulas, problems, wraps, impostors

    @classmethod
    def _separated(cls, result, top, bottom):
        ranks = {r.expr: i for i, r in enumerate(result.ranking)}
        pairs = [(t, b) for t in top for b in bottom]
        good = sum(ranks[t] < ranks[b] for t, b in pairs)
        return good / len(pairs) >= 0.95

    def test_adaptive_race_is_at_least_five_times_faster(self):
        formulas, problems, wraps, impostors = self._setup()

        # independent oracle: a long uniform race pins the true deciles
        big = uniform_race(formulas, problems, self.HORIZON, 100 * 400, 999)
        means = {r.expr: r.mean_reward for r in big.ranking}
        order = sorted(means, key=means.get)
        bottom, top = set(order[:10]), set(order[-10:])
        assert bottom == set(impostors)
        assert top == set(wraps)

        # the naive protocol: every arm gets the full 100-episode evaluation
        naive_budget = len(formulas) * 100
        naive_ok = sum(
            self._separated(
                uniform_race(formulas, problems, self.HORIZON, naive_budget, 100 + s),
                top, bottom)
            for s in self.SEEDS
        )
        assert naive_ok == len(list(self.SEEDS))

        def adaptive_budget_needed():
            for budget in (100, 150, 200, 300, 400, 500, 650, 800, 1000,
                           1300, 1600, 2000):
                ok = sum(
                    self._separated(
                        search_best(formulas, problems, self.HORIZON, budget, 100 + s),
                        top, bottom)
                    for s in self.SEEDS
                )
                if ok == len(list(self.SEEDS)):
                    return budget
            return 10 ** 9

        adaptive = adaptive_budget_needed()
        assert adaptive * 5 <= naive_budget, (adaptive, naive_budget)
