"""Arm reward laws, bandit problem containers, and their JSON form.

Rewards always live in [0, 1].  An arm is either Bernoulli(p) or a Gaussian
N(mu, sigma^2) truncated to [0, 1] (sampled by rejection).  A problem's
``true_means`` hold the expectation of the actual reward law, so for
truncated arms this is the truncated mean, not the pre-truncation mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

# Rejection sampling is guaranteed to terminate for mu in [0,1]; the cap only
# guards against pathological configurations without biasing the law.
REJECTION_CAP = 10**6

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


class RejectionCapError(RuntimeError):
    """Raised when rejection sampling exceeds the safety cap."""


def _phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / _SQRT2PI


def _big_phi(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / _SQRT2))


def truncated_mean(mu: float, sigma: float) -> float:
    """Mean of N(mu, sigma^2) conditioned on the interval [0, 1].

    Closed form: mu + sigma * (phi(a) - phi(b)) / (Phi(b) - Phi(a)) with
    a = -mu/sigma and b = (1-mu)/sigma.  sigma = 0 returns mu.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return float(mu)
    a = (0.0 - mu) / sigma
    b = (1.0 - mu) / sigma
    mass = _big_phi(b) - _big_phi(a)
    return float(mu + sigma * (_phi(a) - _phi(b)) / mass)


@dataclass(frozen=True)
class Bernoulli:
    """Bernoulli arm: reward 1 with probability p, else 0."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"Bernoulli p must be in [0,1], got {self.p}")

    @property
    def mean(self) -> float:
        return self.p

    def sample(self, rng: np.random.Generator) -> float:
        return 1.0 if rng.random() < self.p else 0.0

    def sample_block(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return (rng.random(n) < self.p).astype(np.float64)


@dataclass(frozen=True)
class TruncatedGaussian:
    """Gaussian N(mu, sigma^2) truncated to [0, 1] by rejection sampling."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"TruncatedGaussian mu must be in [0,1], got {self.mu}")
        if self.sigma < 0:
            raise ValueError(f"TruncatedGaussian sigma must be >= 0, got {self.sigma}")

    @property
    def mean(self) -> float:
        return truncated_mean(self.mu, self.sigma)

    def sample(self, rng: np.random.Generator) -> float:
        if self.sigma == 0:
            return self.mu
        for _ in range(REJECTION_CAP):
            x = rng.normal(self.mu, self.sigma)
            if 0.0 <= x <= 1.0:
                return float(x)
        raise RejectionCapError(
            f"no accepted draw after {REJECTION_CAP} iterations for "
            f"TruncatedGaussian({self.mu}, {self.sigma})"
        )

    def sample_block(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """First n accepted draws, taken in draw order (same law as sample())."""
        if self.sigma == 0:
            return np.full(n, self.mu)
        acceptance = _big_phi((1.0 - self.mu) / self.sigma) - _big_phi(-self.mu / self.sigma)
        block = max(64, int(1.3 * n / max(acceptance, 1e-12)))
        out = np.empty(0)
        drawn = 0
        while out.size < n:
            if drawn > max(REJECTION_CAP, 64 * n):
                raise RejectionCapError(
                    f"no {n} accepted draws after {drawn} iterations for "
                    f"TruncatedGaussian({self.mu}, {self.sigma})"
                )
            x = rng.normal(self.mu, self.sigma, block)
            drawn += block
            kept = x[(x >= 0.0) & (x <= 1.0)]
            out = kept if out.size == 0 else np.concatenate([out, kept])
        return out[:n]


ArmDistribution = Union[Bernoulli, TruncatedGaussian]


def sample_reward(dist: ArmDistribution, rng: np.random.Generator) -> float:
    """Draw one reward in [0, 1] from the arm's law."""
    return dist.sample(rng)


@dataclass(frozen=True)
class BanditProblem:
    """An ordered set of K >= 2 arms with their true means precomputed."""

    arms: tuple
    true_means: tuple
    best_mean: float

    @classmethod
    def from_arms(cls, arms: Sequence[ArmDistribution]) -> "BanditProblem":
        arms = tuple(arms)
        if len(arms) < 2:
            raise ValueError("a bandit problem needs at least 2 arms")
        means = tuple(a.mean for a in arms)
        return cls(arms=arms, true_means=means, best_mean=max(means))

    @property
    def k(self) -> int:
        return len(self.arms)


def arm_to_dict(arm: ArmDistribution) -> dict:
    if isinstance(arm, Bernoulli):
        return {"kind": "bernoulli", "p": arm.p}
    return {"kind": "truncated_gaussian", "mu": arm.mu, "sigma": arm.sigma}


def arm_from_dict(rec: dict) -> ArmDistribution:
    kind = rec.get("kind")
    if kind == "bernoulli":
        return Bernoulli(p=float(rec["p"]))
    if kind == "truncated_gaussian":
        return TruncatedGaussian(mu=float(rec["mu"]), sigma=float(rec["sigma"]))
    raise ValueError(f"unknown arm kind: {kind!r}")


def problem_to_dict(problem: BanditProblem) -> dict:
    return {"arms": [arm_to_dict(a) for a in problem.arms]}


def problem_from_dict(rec: dict) -> BanditProblem:
    return BanditProblem.from_arms([arm_from_dict(a) for a in rec["arms"]])
