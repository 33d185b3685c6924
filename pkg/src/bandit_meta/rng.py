"""Derivation of independent, reproducible random streams.

Every stochastic component of the library draws from a stream derived from
an experiment seed plus a structured integer path, e.g. ``(seed, EVALUATION,
problem_index, run_index)``.  Streams derived from distinct paths are
statistically independent, and a result computed from a stream depends only
on its path, never on evaluation order, chunking, or parallelism.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Namespace tags keeping streams for different purposes disjoint.
TRAIN_PROBLEMS = 11
TEST_PROBLEMS = 12
EVALUATION = 13
DELTA = 14
EDA_SAMPLING = 15
EDA_SCORING = 16
META_SEARCH = 17
META_EPISODE = 18
SAMPLE_POINTS = 19
GENERIC = 20


def seed_sequence(seed: int, *path: int) -> np.random.SeedSequence:
    """Build the seed sequence for the stream identified by (seed, *path)."""
    entropy = [int(seed)] + [int(p) for p in path]
    for e in entropy:
        if e < 0:
            raise ValueError(f"seed path components must be nonnegative, got {e}")
    return np.random.SeedSequence(entropy)


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Return an independent generator for the stream (seed, *path)."""
    return np.random.default_rng(seed_sequence(seed, *path))


def derive_seed(seed: int, *path: int) -> int:
    """Collapse (seed, *path) into a fresh integer seed for a sub-experiment."""
    return int(seed_sequence(seed, *path).generate_state(1, np.uint64)[0] >> 1)


def string_tag(text: str) -> int:
    """Stable nonnegative integer tag for a string (used to key streams by name)."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1
