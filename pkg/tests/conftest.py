import numpy as np
import pytest

from bandit_meta import rng as rngmod
from bandit_meta.arms import BanditProblem, Bernoulli
from bandit_meta.harness import ProblemDistribution, sample_problems


@pytest.fixture(scope="session")
def train_problems():
    """The 100-problem Bernoulli training sample used across tuning tests."""
    rng = rngmod.derive_rng(1, rngmod.TRAIN_PROBLEMS)
    return sample_problems(ProblemDistribution(kind="bernoulli"), 100, rng)


@pytest.fixture(scope="session")
def small_test_problems():
    """A 200-problem Bernoulli evaluation sample for mid-weight checks."""
    rng = rngmod.derive_rng(1, rngmod.TEST_PROBLEMS)
    return sample_problems(ProblemDistribution(kind="bernoulli"), 200, rng)


@pytest.fixture
def two_arm_deterministic():
    return BanditProblem.from_arms([Bernoulli(1.0), Bernoulli(0.0)])
