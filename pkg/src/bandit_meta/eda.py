"""Univariate-Gaussian estimation-of-distribution optimizer and its
policy-learning objectives.

Each iteration samples a population coordinate-wise from N(mu_p, sigma_p^2),
scores it, selects the b best (lowest) candidates and refits mu and sigma^2
as the elite mean and elite population variance (divide by b).  The returned
optimum is the best-scoring candidate over the whole run.

Objectives are population-based: ``objective(population, iteration)`` maps
an (n_p, d) candidate matrix to n_p scores, which lets policy objectives
score a whole iteration in one vectorized simulation pass.  Non-finite
scores are treated as +inf.  No constraint projection is applied to
candidates; out-of-domain parameter values are the policies' concern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import rng as rngmod
from .arms import BanditProblem
from .episodes import simulate_batch
from .policies import (
    UCB1,
    UCB2,
    UCBV,
    KLUCB,
    EpsGreedy,
    PowerPolicy,
)
from .power import ThetaVector, feature_count


@dataclass
class EdaConfig:
    """Run-shape of the optimizer; defaults follow the training protocol."""

    dim: int
    i_max: int = 100
    n_p: Optional[int] = None
    b: Optional[int] = None
    init_means: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.n_p is None:
            self.n_p = max(8 * self.dim, 40)
        if self.b is None:
            self.b = self.n_p // 4
        if not 1 <= self.b <= self.n_p:
            raise ValueError("need 1 <= b <= n_p")
        if self.init_means is None:
            self.init_means = np.zeros(self.dim)
        self.init_means = np.asarray(self.init_means, dtype=float)
        if self.init_means.shape != (self.dim,):
            raise ValueError("init_means must have length dim")


@dataclass
class EdaIteration:
    means: np.ndarray
    variances: np.ndarray
    best_score: float


@dataclass
class EdaResult:
    best_theta: np.ndarray
    best_score: float
    trace: List[EdaIteration] = field(default_factory=list)


def eda_optimize(objective: Callable, config: EdaConfig) -> EdaResult:
    """Minimize a population objective with the univariate-Gaussian EDA."""
    means = config.init_means.copy()
    variances = np.ones(config.dim)
    best_theta = None
    best_score = math.inf
    trace: List[EdaIteration] = []
    for iteration in range(config.i_max):
        g = rngmod.derive_rng(config.seed, rngmod.EDA_SAMPLING, iteration)
        population = means + np.sqrt(variances) * g.standard_normal((config.n_p, config.dim))
        scores = np.asarray(objective(population, iteration), dtype=float)
        if scores.shape != (config.n_p,):
            raise ValueError("objective must return one score per candidate")
        scores = np.where(np.isfinite(scores), scores, np.inf)
        order = np.argsort(scores, kind="stable")
        if scores[order[0]] < best_score:
            best_score = float(scores[order[0]])
            best_theta = population[order[0]].copy()
        elite = population[order[: config.b]]
        # Simultaneous update: the variance refit centers on the sampling
        # mean, which keeps the search open while the mean is still moving
        # and only collapses once it has stopped.
        variances = ((elite - means) ** 2).mean(axis=0)
        means = elite.mean(axis=0)
        trace.append(EdaIteration(means=means.copy(), variances=variances.copy(),
                                  best_score=best_score))
    if best_theta is None:
        best_theta = config.init_means.copy()
    return EdaResult(best_theta=best_theta, best_score=best_score, trace=trace)


def scalar_objective(f: Callable[[np.ndarray], float]) -> Callable:
    """Lift a vector -> real objective to the population interface."""

    def objective(population, iteration):
        return np.array([f(theta) for theta in population], dtype=float)

    return objective


# ---------------------------------------------------------------------------
# Policy-learning objectives

def evaluate_delta(
    policy,
    problems: Sequence[BanditProblem],
    horizon: int,
    seed: int,
) -> float:
    """Empirical mean regret: one seeded episode of the policy per problem."""
    if not problems:
        raise ValueError("need at least one training problem")
    rngs = [rngmod.derive_rng(seed, rngmod.DELTA, i) for i in range(len(problems))]
    out = simulate_batch(list(problems), policy, horizon, rngs)
    return float(out.regrets.mean())


def _population_delta(
    builder: Callable[[np.ndarray], object],
    problems: Sequence[BanditProblem],
    horizon: int,
    seed: int,
) -> Callable:
    """Score a candidate population: mean regret of one episode per problem.

    Episode streams derive from (seed, iteration, candidate, problem), so
    every candidate sees fresh episodes each iteration while the training
    problems themselves stay fixed.
    """
    problems = list(problems)
    n_problems = len(problems)

    def objective(population, iteration):
        n_cand = population.shape[0]
        tiled = problems * n_cand
        per_row = np.repeat(population, n_problems, axis=0)
        policy = builder(per_row)
        rngs = [
            rngmod.derive_rng(seed, rngmod.EDA_SCORING, iteration, c, i)
            for c in range(n_cand)
            for i in range(n_problems)
        ]
        out = simulate_batch(tiled, policy, horizon, rngs)
        return out.regrets.reshape(n_cand, n_problems).mean(axis=1)

    return objective


@dataclass
class TunableSpec:
    dim: int
    defaults: tuple
    builder: Callable[[np.ndarray], object]
    formatter: Callable[[np.ndarray], str]


TUNABLE_POLICIES = {
    "ucb1": TunableSpec(
        dim=1,
        defaults=(2.0,),
        builder=lambda p: UCB1(C=p[..., 0]),
        formatter=lambda v: f"ucb1:C={float(v[0])!r}",
    ),
    "ucb2": TunableSpec(
        dim=1,
        defaults=(0.001,),
        builder=lambda p: UCB2(alpha=p[..., 0]),
        formatter=lambda v: f"ucb2:alpha={float(v[0])!r}",
    ),
    "ucbv": TunableSpec(
        dim=2,
        defaults=(1.0, 1.0),
        builder=lambda p: UCBV(zeta=p[..., 0], c=p[..., 1]),
        formatter=lambda v: f"ucbv:zeta={float(v[0])!r},c={float(v[1])!r}",
    ),
    "klucb": TunableSpec(
        dim=1,
        defaults=(0.0,),
        builder=lambda p: KLUCB(c=p[..., 0]),
        formatter=lambda v: f"klucb:c={float(v[0])!r}",
    ),
    "epsgreedy": TunableSpec(
        dim=2,
        defaults=(1.0, 1.0),
        builder=lambda p: EpsGreedy(c=p[..., 0], d=p[..., 1]),
        formatter=lambda v: f"epsgreedy:c={float(v[0])!r},d={float(v[1])!r}",
    ),
}


@dataclass
class TuneResult:
    policy_spec: str
    params: np.ndarray
    best_delta: float
    trace: List[EdaIteration]


def tune_policy(
    kind: str,
    problems: Sequence[BanditProblem],
    horizon: int,
    seed: int,
    *,
    i_max: int = 100,
    n_p: Optional[int] = None,
    b: Optional[int] = None,
) -> TuneResult:
    """Tune a generic policy's hyper-parameters on the training problems.

    The EDA Gaussians start centered on the policy's documented default
    parameter values, with unit variance.
    """
    kind = kind.strip().lower()
    if kind not in TUNABLE_POLICIES:
        raise ValueError(
            f"policy {kind!r} is not tunable; choose from {sorted(TUNABLE_POLICIES)}"
        )
    spec = TUNABLE_POLICIES[kind]
    config = EdaConfig(
        dim=spec.dim,
        i_max=i_max,
        n_p=n_p,
        b=b,
        init_means=np.asarray(spec.defaults, dtype=float),
        seed=seed,
    )
    objective = _population_delta(spec.builder, problems, horizon, seed)
    result = eda_optimize(objective, config)
    return TuneResult(
        policy_spec=spec.formatter(result.best_theta),
        params=result.best_theta,
        best_delta=result.best_score,
        trace=result.trace,
    )


@dataclass
class LearnResult:
    theta: ThetaVector
    best_delta: float
    trace: List[EdaIteration]


def learn_power(
    degree: int,
    problems: Sequence[BanditProblem],
    horizon: int,
    seed: int,
    *,
    i_max: int = 100,
    n_p: Optional[int] = None,
    b: Optional[int] = None,
) -> LearnResult:
    """Learn a Power-P policy's theta by minimizing the empirical mean regret."""
    dim = feature_count(degree)
    config = EdaConfig(dim=dim, i_max=i_max, n_p=n_p, b=b, seed=seed)
    builder = lambda p: PowerPolicy(p, degree=degree)  # noqa: E731
    objective = _population_delta(builder, problems, horizon, seed)
    result = eda_optimize(objective, config)
    return LearnResult(
        theta=ThetaVector(result.best_theta, degree),
        best_delta=result.best_score,
        trace=result.trace,
    )
