"""Power-P index family: polynomial history features with linear weights.

The four base variables are v1 = sqrt(ln t), v2 = 1/sqrt(t_k), v3 = rbar_k,
v4 = sbar_k.  For degree P there is one feature per exponent combination
(i, j, k, l) in {0..P}^4, f = v1^i v2^j v3^k v4^l, laid out row-major over
(i, j, k, l); the index is the dot product with a learned theta of length
(P+1)^4.  0^0 is 1, so the all-zero exponent feature is the constant 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .episodes import ArmStats


def feature_count(degree: int) -> int:
    return (degree + 1) ** 4


def feature_exponents(degree: int) -> List[Tuple[int, int, int, int]]:
    """Exponent tuples in the fixed row-major order of the serialized theta."""
    span = range(degree + 1)
    return [(i, j, k, l) for i in span for j in span for k in span for l in span]


def base_variables(stats: ArmStats, t: int) -> Tuple[float, float, float, float]:
    if stats.plays < 1 or t < 1:
        raise ValueError("features need plays >= 1 and t >= 1")
    return (
        math.sqrt(math.log(t)),
        1.0 / math.sqrt(stats.plays),
        stats.mean,
        stats.stddev,
    )


def compute_features(stats: ArmStats, t: int, degree: int) -> np.ndarray:
    """Feature vector of length (P+1)^4 for one arm at play t."""
    v1, v2, v3, v4 = base_variables(stats, t)
    out = np.empty(feature_count(degree))
    for m, (i, j, k, l) in enumerate(feature_exponents(degree)):
        out[m] = (v1 ** i) * (v2 ** j) * (v3 ** k) * (v4 ** l)
    return out


@dataclass(frozen=True)
class ThetaVector:
    """Learned weights for one Power-P policy."""

    theta: np.ndarray
    degree: int

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        if self.theta.shape != (feature_count(self.degree),):
            raise ValueError(
                f"theta for degree {self.degree} must have length "
                f"{feature_count(self.degree)}, got {self.theta.shape}"
            )


def index_power(theta: "ThetaVector | np.ndarray", stats: ArmStats, t: int) -> float:
    """Dot product of theta with the features of (stats, t)."""
    if isinstance(theta, ThetaVector):
        degree, vec = theta.degree, theta.theta
    else:
        vec = np.asarray(theta, dtype=float)
        degree = round(len(vec) ** 0.25) - 1
        if feature_count(degree) != len(vec):
            raise ValueError(f"theta length {len(vec)} is not (P+1)^4")
    return float(np.dot(vec, compute_features(stats, t, degree)))


def theta_to_json(theta: ThetaVector) -> str:
    return json.dumps({"P": theta.degree, "theta": [float(x) for x in theta.theta]})


def theta_from_json(text: str) -> ThetaVector:
    rec = json.loads(text)
    return ThetaVector(theta=np.asarray(rec["theta"], dtype=float), degree=int(rec["P"]))


def save_theta(path: str, theta: ThetaVector) -> None:
    with open(path, "w") as fh:
        fh.write(theta_to_json(theta) + "\n")


def load_theta(path: str) -> ThetaVector:
    with open(path) as fh:
        return theta_from_json(fh.read())
