"""Best-formula identification as a pure-exploration meta-bandit.

Each candidate formula is one meta-arm.  Pulling arm k plays one episode of
the index policy defined by formula k on training problem 1 + (t_k mod N),
where t_k is the arm's pull count before the pull, and returns the
normalized reward 1 - regret/T clipped to [0, 1].  A formula that turns
INVALID on live statistics scores 0 for that pull and stays in the race.

The race plays every arm once and then lets UCB1-Tuned allocate the rest of
the budget; the final ranking is by empirical mean reward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import rng as rngmod
from .arms import BanditProblem
from .formulas import Formula, compile_formula_scalar, format_formula


def default_reward(regret: float, horizon: int) -> float:
    """Normalized meta-reward 1 - R/T clipped into [0, 1]."""
    return min(1.0, max(0.0, 1.0 - regret / horizon))


def _formula_episode(
    fn,
    problem: BanditProblem,
    horizon: int,
    rng: np.random.Generator,
) -> Optional[float]:
    """One episode of an index policy given by a compiled formula.

    Returns the episode regret, or None as soon as the formula evaluates
    INVALID (NaN) on any arm's live statistics.
    """
    k = problem.k
    rewards = [arm.sample_block(rng, horizon) for arm in problem.arms]
    tiebreak = rng.random(horizon)

    plays = [1] * k
    sums = [float(r[0]) for r in rewards]
    sumsq = [float(r[0]) * float(r[0]) for r in rewards]
    means = list(sums)
    stds = [0.0] * k

    for t in range(k + 1, horizon + 1):
        best_val = -math.inf
        best_arms: List[int] = []
        for a in range(k):
            v = fn(means[a], stds[a], float(plays[a]), float(t))
            if v != v:  # NaN: invalid index on live statistics
                return None
            if v > best_val:
                best_val = v
                best_arms = [a]
            elif v == best_val:
                best_arms.append(a)
        if not best_arms:  # every arm -inf is impossible here, but stay safe
            best_arms = list(range(k))
        if len(best_arms) == 1:
            arm = best_arms[0]
        else:
            arm = best_arms[int(tiebreak[t - 1] * len(best_arms))]
        r = float(rewards[arm][plays[arm]])
        plays[arm] += 1
        sums[arm] += r
        sumsq[arm] += r * r
        m = sums[arm] / plays[arm]
        means[arm] = m
        stds[arm] = math.sqrt(max(0.0, sumsq[arm] / plays[arm] - m * m))

    best = problem.best_mean
    return float(sum(p * (best - mu) for p, mu in zip(plays, problem.true_means)))


class MetaBandit:
    """Meta-bandit state: one arm per formula, rewards from seeded episodes."""

    def __init__(
        self,
        formulas: Sequence[Formula],
        problems: Sequence[BanditProblem],
        horizon: int,
        seed: int,
        reward_fn: Callable[[float, int], float] = default_reward,
    ):
        if not formulas:
            raise ValueError("need at least one formula")
        if not problems:
            raise ValueError("need at least one training problem")
        self.formulas = list(formulas)
        self.compiled = [compile_formula_scalar(f) for f in self.formulas]
        self.problems = list(problems)
        self.horizon = int(horizon)
        self.seed = int(seed)
        self.reward_fn = reward_fn
        m = len(self.formulas)
        self.counts = np.zeros(m, dtype=np.int64)
        self.sums = np.zeros(m)
        self.sumsq = np.zeros(m)
        self.total_pulls = 0

    @property
    def n_arms(self) -> int:
        return len(self.formulas)

    def pull(self, k: int) -> float:
        """Play meta-arm k once and return its normalized reward."""
        t_k = int(self.counts[k])
        problem = self.problems[t_k % len(self.problems)]
        episode_rng = rngmod.derive_rng(self.seed, rngmod.META_EPISODE, k, t_k)
        regret = _formula_episode(self.compiled[k], problem, self.horizon, episode_rng)
        reward = 0.0 if regret is None else self.reward_fn(regret, self.horizon)
        self.counts[k] += 1
        self.sums[k] += reward
        self.sumsq[k] += reward * reward
        self.total_pulls += 1
        return reward

    def means(self) -> np.ndarray:
        return self.sums / np.maximum(self.counts, 1)


@dataclass
class RankedFormula:
    formula: Formula
    mean_reward: float
    pulls: int

    @property
    def expr(self) -> str:
        return format_formula(self.formula)


@dataclass
class SearchResult:
    ranking: List[RankedFormula]
    budget: int
    horizon: int
    seed: int

    @property
    def best(self) -> RankedFormula:
        return self.ranking[0]


def _rank(bandit: MetaBandit, budget: int, seed: int) -> SearchResult:
    means = bandit.means()
    order = sorted(range(bandit.n_arms), key=lambda k: (-means[k], k))
    ranking = [
        RankedFormula(
            formula=bandit.formulas[k],
            mean_reward=float(means[k]),
            pulls=int(bandit.counts[k]),
        )
        for k in order
    ]
    return SearchResult(ranking=ranking, budget=budget, horizon=bandit.horizon, seed=seed)


def search_best(
    formulas: Sequence[Formula],
    problems: Sequence[BanditProblem],
    horizon: int,
    budget: int,
    seed: int,
    reward_fn: Callable[[float, int], float] = default_reward,
) -> SearchResult:
    """Race the formulas with UCB1-Tuned and rank them by mean meta-reward."""
    bandit = MetaBandit(formulas, problems, horizon, seed, reward_fn)
    m = bandit.n_arms
    if budget < m:
        raise ValueError(f"budget {budget} cannot initialize all {m} arms")
    select_rng = rngmod.derive_rng(seed, rngmod.META_SEARCH)

    for k in range(m):
        bandit.pull(k)

    counts = bandit.counts
    sums = bandit.sums
    sumsq = bandit.sumsq
    with np.errstate(all="ignore"):
        for _ in range(budget - m):
            t = bandit.total_pulls + 1
            log_t = math.log(t)
            mean = sums / counts
            var = np.maximum(sumsq / counts - mean * mean, 0.0)
            inner = np.minimum(0.25, np.sqrt(var) + np.sqrt(2.0 * log_t / counts))
            idx = mean + np.sqrt(log_t / counts * inner)
            best = idx.max()
            ties = np.flatnonzero(idx == best)
            k = int(ties[0]) if ties.size == 1 else int(ties[select_rng.integers(ties.size)])
            bandit.pull(k)

    return _rank(bandit, budget, seed)


def uniform_race(
    formulas: Sequence[Formula],
    problems: Sequence[BanditProblem],
    horizon: int,
    budget: int,
    seed: int,
    reward_fn: Callable[[float, int], float] = default_reward,
) -> SearchResult:
    """Round-robin baseline with the same episode streams (naive Monte Carlo)."""
    bandit = MetaBandit(formulas, problems, horizon, seed, reward_fn)
    m = bandit.n_arms
    if budget < m:
        raise ValueError(f"budget {budget} cannot initialize all {m} arms")
    for pull in range(budget):
        bandit.pull(pull % m)
    return _rank(bandit, budget, seed)


def write_ranking(path: str, result: SearchResult, extra: Optional[dict] = None) -> None:
    with open(path, "w") as fh:
        header = {
            "budget": result.budget,
            "horizon": result.horizon,
            "seed": result.seed,
        }
        if extra:
            header.update(extra)
        fh.write(json.dumps(header) + "\n")
        for row in result.ranking:
            fh.write(json.dumps({
                "expr": row.expr,
                "mean_reward": row.mean_reward,
                "pulls": row.pulls,
            }) + "\n")
