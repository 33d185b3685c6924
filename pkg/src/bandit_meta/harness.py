"""Experiment orchestration: problem distributions, the train/test protocol,
policy evaluation grids, win rates, and report persistence.

Evaluation is embarrassingly parallel over (problem, run) episodes; every
episode's stream derives from (seed, problem index, run index), so results
are bit-identical for any chunking or worker count.  ``BANDIT_META_THREADS``
caps the number of worker processes (default 1, serial).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import rng as rngmod
from .arms import BanditProblem, Bernoulli, TruncatedGaussian, problem_from_dict, problem_to_dict
from .eda import learn_power, tune_policy
from .episodes import simulate_batch
from .policies import PowerPolicy, parse_policy
from .power import theta_to_json

# Soft cap on pre-drawn doubles per simulation chunk (~190 MB).
_CHUNK_ELEMENT_BUDGET = 24_000_000


class ConfigError(ValueError):
    """Bad experiment configuration (CLI exit code 2)."""


class StageError(RuntimeError):
    """A pipeline stage failed (CLI exit code 3)."""


# ---------------------------------------------------------------------------
# Problem distributions

@dataclass(frozen=True)
class ProblemDistribution:
    """Prior over problems: 'bernoulli' (D_P) or 'truncated_gaussian' (D'_P).

    For truncated-Gaussian problems, ``regret_means`` picks the reference
    used in regret accounting: ``"parameter"`` scores against the drawn mu
    (the convention behind the published Gaussian regret tables), while
    ``"truncated"`` scores against the actual truncated-law expectation.
    """

    kind: str
    k: int = 2
    regret_means: str = "parameter"

    def __post_init__(self):
        if self.kind not in ("bernoulli", "truncated_gaussian"):
            raise ConfigError(f"unknown problem distribution {self.kind!r}")
        if self.k < 2:
            raise ConfigError("problem distributions need k >= 2 arms")
        if self.regret_means not in ("parameter", "truncated"):
            raise ConfigError(f"unknown regret_means {self.regret_means!r}")


def sample_problem(dist: ProblemDistribution, rng: np.random.Generator) -> BanditProblem:
    """Draw one problem: arm parameters are uniform on [0, 1]."""
    if dist.kind == "bernoulli":
        arms = [Bernoulli(p=float(rng.random())) for _ in range(dist.k)]
        return BanditProblem.from_arms(arms)
    arms = []
    mus = []
    for _ in range(dist.k):
        mu, sigma = float(rng.random()), float(rng.random())
        arms.append(TruncatedGaussian(mu=mu, sigma=sigma))
        mus.append(mu)
    if dist.regret_means == "truncated":
        return BanditProblem.from_arms(arms)
    return BanditProblem(arms=tuple(arms), true_means=tuple(mus), best_mean=max(mus))


def sample_problems(
    dist: ProblemDistribution, count: int, rng: np.random.Generator
) -> List[BanditProblem]:
    return [sample_problem(dist, rng) for _ in range(count)]


def _parse_distribution(value) -> ProblemDistribution:
    alias = {"gaussian": "truncated_gaussian"}
    if isinstance(value, ProblemDistribution):
        return value
    if isinstance(value, str):
        return ProblemDistribution(kind=alias.get(value, value))
    if isinstance(value, dict):
        kind = alias.get(value.get("kind"), value.get("kind"))
        return ProblemDistribution(
            kind=kind,
            k=int(value.get("k", 2)),
            regret_means=value.get("regret_means", "parameter"),
        )
    raise ConfigError(f"cannot interpret problem distribution {value!r}")


# ---------------------------------------------------------------------------
# Evaluation grid

def threads_cap() -> int:
    raw = os.environ.get("BANDIT_META_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"BANDIT_META_THREADS must be an integer, got {raw!r}")


@dataclass
class EvalResult:
    mean_regret: float
    per_problem: np.ndarray
    stderr: float


def _chunk_rows(horizon: int, k: int, extra: int) -> int:
    per_episode = horizon * (k + 1 + extra)
    return max(1, _CHUNK_ELEMENT_BUDGET // per_episode)


def _eval_problem_range(args) -> np.ndarray:
    policy, problems, horizon, runs, seed, start = args
    extra = getattr(policy, "extra_uniform_rows", 0)
    k = problems[0].k
    rows_cap = _chunk_rows(horizon, k, extra)
    grid = [(p, r) for p in range(len(problems)) for r in range(runs)]
    regrets = np.empty(len(grid))
    for lo in range(0, len(grid), rows_cap):
        part = grid[lo:lo + rows_cap]
        batch_problems = [problems[p] for p, _ in part]
        rngs = [
            rngmod.derive_rng(seed, rngmod.EVALUATION, start + p, r)
            for p, r in part
        ]
        out = simulate_batch(batch_problems, policy, horizon, rngs)
        regrets[lo:lo + len(part)] = out.regrets
    return regrets.reshape(len(problems), runs).mean(axis=1)


def evaluate_policy(
    policy,
    problems: Sequence[BanditProblem],
    horizon: int,
    runs: int,
    seed: int,
) -> EvalResult:
    """Mean regret per problem over ``runs`` seeded episodes, and the overall mean.

    Episode streams derive from (seed, problem index, run index); the result
    is independent of chunking and of the worker count.
    """
    if isinstance(policy, str):
        policy = parse_policy(policy)
    problems = list(problems)
    if not problems:
        raise ValueError("need at least one problem")
    workers = threads_cap()
    if workers > 1 and len(problems) > 1:
        shard = math.ceil(len(problems) / workers)
        tasks = [
            (policy, problems[lo:lo + shard], horizon, runs, seed, lo)
            for lo in range(0, len(problems), shard)
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_eval_problem_range, tasks))
        per_problem = np.concatenate(parts)
    else:
        per_problem = _eval_problem_range((policy, problems, horizon, runs, seed, 0))
    mean = float(per_problem.mean())
    stderr = float(per_problem.std(ddof=1) / math.sqrt(len(per_problem))) \
        if len(per_problem) > 1 else 0.0
    return EvalResult(mean_regret=mean, per_problem=per_problem, stderr=stderr)


def percent_wins(
    policy,
    baseline,
    problems: Sequence[BanditProblem],
    horizon: int,
    runs: int,
    seed: int,
) -> float:
    """Share of problems (in %) where the policy's mean regret is strictly lower.

    Each side evaluates on its own stream keyed by its canonical name, so a
    policy compared against itself reuses identical episodes and scores 0.
    """
    if isinstance(policy, str):
        policy = parse_policy(policy)
    if isinstance(baseline, str):
        baseline = parse_policy(baseline)
    seed_p = rngmod.derive_seed(seed, rngmod.string_tag(policy.spec_string))
    seed_b = rngmod.derive_seed(seed, rngmod.string_tag(baseline.spec_string))
    side_p = evaluate_policy(policy, problems, horizon, runs, seed_p)
    side_b = evaluate_policy(baseline, problems, horizon, runs, seed_b)
    return float((side_p.per_problem < side_b.per_problem).mean() * 100.0)


# ---------------------------------------------------------------------------
# Experiment spec and report

@dataclass
class ExperimentSpec:
    train_distribution: ProblemDistribution
    test_distribution: ProblemDistribution
    n_train: int = 100
    n_test: int = 10_000
    runs_per_problem: int = 100
    horizons: List[int] = field(default_factory=lambda: [10, 100, 1000])
    policies: List[str] = field(default_factory=list)
    tune: List[dict] = field(default_factory=list)
    learn: List[dict] = field(default_factory=list)
    baseline: str = "ucb1tuned"
    master_seed: int = 1

    def __post_init__(self):
        for name, value in (("n_train", self.n_train), ("n_test", self.n_test),
                            ("runs_per_problem", self.runs_per_problem)):
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if not self.horizons:
            raise ConfigError("need at least one horizon")

    @classmethod
    def from_dict(cls, rec: dict) -> "ExperimentSpec":
        rec = dict(rec)
        try:
            return cls(
                train_distribution=_parse_distribution(rec.pop("train_distribution", "bernoulli")),
                test_distribution=_parse_distribution(rec.pop("test_distribution", "bernoulli")),
                n_train=int(rec.pop("n_train", 100)),
                n_test=int(rec.pop("n_test", 10_000)),
                runs_per_problem=int(rec.pop("runs_per_problem", 100)),
                horizons=[int(h) for h in rec.pop("horizons", [10, 100, 1000])],
                policies=list(rec.pop("policies", [])),
                tune=list(rec.pop("tune", [])),
                learn=list(rec.pop("learn", [])),
                baseline=rec.pop("baseline", "ucb1tuned"),
                master_seed=int(rec.pop("master_seed", 1)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "train_distribution": {"kind": self.train_distribution.kind,
                                   "k": self.train_distribution.k},
            "test_distribution": {"kind": self.test_distribution.kind,
                                  "k": self.test_distribution.k},
            "n_train": self.n_train,
            "n_test": self.n_test,
            "runs_per_problem": self.runs_per_problem,
            "horizons": self.horizons,
            "policies": self.policies,
            "tune": self.tune,
            "learn": self.learn,
            "baseline": self.baseline,
            "master_seed": self.master_seed,
        }


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    rows: List[dict]
    stages: dict
    status: str = "complete"
    failed_stage: Optional[str] = None
    error: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps({
            "status": self.status,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "config": self.spec.to_dict(),
            "stages": self.stages,
            "results": self.rows,
        }, indent=2)

    def to_csv(self) -> str:
        lines = ["policy,horizon,mean_regret,stderr,win_vs_baseline"]
        for row in self.rows:
            win = row.get("win_vs_baseline")
            win_text = "" if win is None else repr(win)
            lines.append(
                f"{row['policy']},{row['horizon']},{row['mean_regret']!r},"
                f"{row['stderr']!r},{win_text}"
            )
        return "\n".join(lines) + "\n"


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Sample train/test sets, run tuning/learning stages, evaluate, report.

    A stage failure stops the pipeline and yields a partial report carrying
    the failed stage's name and error; completed results are kept.
    """
    stages: dict = {}
    rows: List[dict] = []
    stage = "sample-problems"
    try:
        train_rng = rngmod.derive_rng(spec.master_seed, rngmod.TRAIN_PROBLEMS)
        test_rng = rngmod.derive_rng(spec.master_seed, rngmod.TEST_PROBLEMS)
        train_problems = sample_problems(spec.train_distribution, spec.n_train, train_rng)
        test_problems = sample_problems(spec.test_distribution, spec.n_test, test_rng)

        policy_specs = list(spec.policies)

        for request in spec.tune:
            kind = request.get("policy")
            horizon = int(request.get("horizon"))
            stage = f"tune:{kind}@T={horizon}"
            tune_seed = rngmod.derive_seed(spec.master_seed, rngmod.string_tag(stage))
            result = tune_policy(
                kind, train_problems, horizon, tune_seed,
                i_max=int(request.get("i_max", 100)),
                n_p=request.get("n_p"),
                b=request.get("b"),
            )
            stages[stage] = {
                "policy_spec": result.policy_spec,
                "params": [float(x) for x in result.params],
                "train_delta": result.best_delta,
            }
            policy_specs.append(result.policy_spec)

        for request in spec.learn:
            degree = int(request.get("P", 1))
            horizon = int(request.get("horizon"))
            stage = f"learn:power{degree}@T={horizon}"
            learn_seed = rngmod.derive_seed(spec.master_seed, rngmod.string_tag(stage))
            result = learn_power(
                degree, train_problems, horizon, learn_seed,
                i_max=int(request.get("i_max", 100)),
                n_p=request.get("n_p"),
                b=request.get("b"),
            )
            stages[stage] = {
                "theta": json.loads(theta_to_json(result.theta)),
                "train_delta": result.best_delta,
            }
            policy_specs.append(PowerPolicy(result.theta).spec_string)
            stages[stage]["policy_name"] = policy_specs[-1]

        stage = "evaluate"
        baseline = parse_policy(spec.baseline)
        learned_by_name = {
            rec.get("policy_name"): PowerPolicy(
                np.asarray(rec["theta"]["theta"], dtype=float),
                degree=int(rec["theta"]["P"]),
            )
            for rec in stages.values()
            if isinstance(rec, dict) and "theta" in rec
        }

        seen = set()
        for horizon in spec.horizons:
            base_eval = evaluate_policy(
                baseline, test_problems, horizon, spec.runs_per_problem,
                rngmod.derive_seed(spec.master_seed,
                                   rngmod.string_tag(baseline.spec_string), horizon),
            )
            for name in [spec.baseline] + policy_specs:
                policy = learned_by_name.get(name)
                if policy is None:
                    policy = parse_policy(name)
                if (policy.spec_string, horizon) in seen:
                    continue
                seen.add((policy.spec_string, horizon))
                is_baseline = policy.spec_string == baseline.spec_string
                if is_baseline:
                    result = base_eval
                else:
                    result = evaluate_policy(
                        policy, test_problems, horizon, spec.runs_per_problem,
                        rngmod.derive_seed(spec.master_seed,
                                           rngmod.string_tag(policy.spec_string), horizon),
                    )
                win = None if is_baseline else float(
                    (result.per_problem < base_eval.per_problem).mean() * 100.0
                )
                rows.append({
                    "policy": policy.spec_string,
                    "horizon": horizon,
                    "mean_regret": result.mean_regret,
                    "stderr": result.stderr,
                    "win_vs_baseline": win,
                })
    except Exception as exc:  # stage failure -> partial report marker
        return ExperimentReport(
            spec=spec, rows=rows, stages=stages,
            status="partial", failed_stage=stage, error=f"{type(exc).__name__}: {exc}",
        )
    return ExperimentReport(spec=spec, rows=rows, stages=stages)


# ---------------------------------------------------------------------------
# Problem file I/O

def write_problems(path: str, problems: Sequence[BanditProblem]) -> None:
    with open(path, "w") as fh:
        for p in problems:
            fh.write(json.dumps(problem_to_dict(p)) + "\n")


def read_problems(path: str) -> List[BanditProblem]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(problem_from_dict(json.loads(line)))
    return out
