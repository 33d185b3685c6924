"""Deterministic simulation of K-armed bandit episodes with regret accounting.

Episodes are simulated in vectorized lockstep batches: at play t every
episode in the batch selects and pulls one arm.  Each episode pre-draws all
of its randomness (per-arm reward stacks, tie-break uniforms, policy extras)
from its own stream, so an episode's result is a pure function of that
stream and never depends on batch composition, chunk size, or scheduling.

Regret uses expected-value accounting: ``cumulative_reward`` is
sum_k pulls_k * mu_k and ``regret = T * best_mean - cumulative_reward``,
an unbiased, lower-variance estimator of the expected cumulative regret.
The policy itself always consumes the realized sampled rewards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .arms import BanditProblem


@dataclass(frozen=True)
class ArmStats:
    """Per-arm sufficient statistics (population stddev, 0 at plays = 1)."""

    plays: int = 0
    sum: float = 0.0
    sum_sq: float = 0.0

    @property
    def mean(self) -> float:
        if self.plays == 0:
            return math.nan
        return self.sum / self.plays

    @property
    def stddev(self) -> float:
        if self.plays == 0:
            return math.nan
        m = self.sum / self.plays
        return math.sqrt(max(0.0, self.sum_sq / self.plays - m * m))


def update_stats(stats: ArmStats, reward: float) -> ArmStats:
    """Fold one observed reward into the statistics."""
    return ArmStats(
        plays=stats.plays + 1,
        sum=stats.sum + reward,
        sum_sq=stats.sum_sq + reward * reward,
    )


@dataclass(frozen=True)
class EpisodeResult:
    regret: float
    pulls: tuple
    cumulative_reward: float


@dataclass
class Workspace:
    """Pre-drawn entropy for a batch of episodes.

    rewards[b, k, n] is the reward of episode b's (n+1)-th pull of arm k;
    tiebreak[b, t-1] feeds the uniform tie-break of play t; extras holds
    policy-declared uniform rows (e.g. the eps-greedy coin and arm choice).
    """

    rewards: np.ndarray
    tiebreak: np.ndarray
    extras: Optional[np.ndarray]


def build_workspace(
    problems: Sequence[BanditProblem],
    horizon: int,
    rngs: Sequence[np.random.Generator],
    extra_uniform_rows: int = 0,
) -> Workspace:
    n = len(problems)
    k = problems[0].k
    rewards = np.empty((n, k, horizon))
    tiebreak = np.empty((n, horizon))
    extras = np.empty((n, extra_uniform_rows, horizon)) if extra_uniform_rows else None
    for b, (problem, rng) in enumerate(zip(problems, rngs)):
        for j, arm in enumerate(problem.arms):
            rewards[b, j] = arm.sample_block(rng, horizon)
        tiebreak[b] = rng.random(horizon)
        if extras is not None:
            extras[b] = rng.random((extra_uniform_rows, horizon))
    return Workspace(rewards=rewards, tiebreak=tiebreak, extras=extras)


@dataclass
class BatchResult:
    pulls: np.ndarray            # (B, K) int64
    regrets: np.ndarray          # (B,)
    cumulative_rewards: np.ndarray  # (B,)


def simulate_batch(
    problems: Sequence[BanditProblem],
    policy,
    horizon: int,
    rngs: Sequence[np.random.Generator],
) -> BatchResult:
    """Run one episode per (problem, rng) pair, all in lockstep.

    ``policy`` follows the batch-policy protocol: ``extra_uniform_rows``,
    ``init_state(B, K)`` and ``select(state, t, counts, means, stds, ws)``
    returning the (B,) arm choices for play t.  Plays 1..K are the forced
    initialization of each arm in order; selection runs for t = K+1..T.
    """
    n = len(problems)
    if n == 0:
        raise ValueError("empty batch")
    if len(rngs) != n:
        raise ValueError("need one rng per episode")
    k = problems[0].k
    if any(p.k != k for p in problems):
        raise ValueError("all problems in a batch must have the same number of arms")
    if horizon < k:
        raise ValueError(f"horizon {horizon} is smaller than the number of arms {k}")

    ws = build_workspace(problems, horizon, rngs, getattr(policy, "extra_uniform_rows", 0))

    counts = np.zeros((n, k), dtype=np.int64)
    sums = np.zeros((n, k))
    sumsq = np.zeros((n, k))
    means = np.zeros((n, k))
    stds = np.zeros((n, k))
    rows = np.arange(n)

    # Initialization: play each arm once, in order (plays t = 1..K).
    for j in range(k):
        r = ws.rewards[:, j, 0]
        counts[:, j] = 1
        sums[:, j] = r
        sumsq[:, j] = r * r
        means[:, j] = r
        # population stddev of a single observation is 0 (already the case)

    state = policy.init_state(n, k)
    with np.errstate(all="ignore"):
        for t in range(k + 1, horizon + 1):
            arms = policy.select(state, t, counts, means, stds, ws)
            pulled = counts[rows, arms]
            r = ws.rewards[rows, arms, pulled]
            new_count = pulled + 1
            counts[rows, arms] = new_count
            s = sums[rows, arms] + r
            sums[rows, arms] = s
            q = sumsq[rows, arms] + r * r
            sumsq[rows, arms] = q
            m = s / new_count
            means[rows, arms] = m
            var = q / new_count - m * m
            stds[rows, arms] = np.sqrt(np.maximum(var, 0.0))

    true_means = np.array([p.true_means for p in problems])
    best = np.array([p.best_mean for p in problems])
    cumulative = (counts * true_means).sum(axis=1)
    regrets = horizon * best - cumulative
    return BatchResult(pulls=counts, regrets=regrets, cumulative_rewards=cumulative)


def run_episode(
    problem: BanditProblem,
    policy,
    horizon: int,
    rng: np.random.Generator | int,
) -> EpisodeResult:
    """Play one full episode and return its regret, pulls, and reward total."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    out = simulate_batch([problem], policy, horizon, [rng])
    return EpisodeResult(
        regret=float(out.regrets[0]),
        pulls=tuple(int(c) for c in out.pulls[0]),
        cumulative_reward=float(out.cumulative_rewards[0]),
    )
