"""Meta-learning of exploration/exploitation strategies for finite-horizon
multi-armed bandits: seedable episode simulation, the classic index policies,
EDA-learned numeric (Power-P) policies, and a grammar of symbolic index
formulas clustered by behavior and raced with a pure-exploration bandit.
"""

from .arms import (
    BanditProblem,
    Bernoulli,
    TruncatedGaussian,
    sample_reward,
    truncated_mean,
)
from .episodes import ArmStats, EpisodeResult, run_episode, simulate_batch, update_stats
from .eda import EdaConfig, eda_optimize, evaluate_delta, learn_power, tune_policy
from .formulas import (
    draw_sample_points,
    enumerate_formulas,
    eval_formula,
    format_formula,
    formula_length,
    parse_formula,
    partition,
    signature_of,
)
from .harness import (
    ExperimentSpec,
    ProblemDistribution,
    evaluate_policy,
    percent_wins,
    run_experiment,
    sample_problem,
    sample_problems,
)
from .policies import (
    EpsGreedy,
    FormulaPolicy,
    KLUCB,
    PowerPolicy,
    UCB1,
    UCB1Normal,
    UCB1Tuned,
    UCB2,
    UCBV,
    parse_policy,
    select_arm,
)
from .power import ThetaVector, compute_features, index_power
from .search import MetaBandit, search_best, uniform_race

__version__ = "0.1.0"

__all__ = [
    "ArmStats",
    "BanditProblem",
    "Bernoulli",
    "EdaConfig",
    "EpisodeResult",
    "EpsGreedy",
    "ExperimentSpec",
    "FormulaPolicy",
    "KLUCB",
    "MetaBandit",
    "PowerPolicy",
    "ProblemDistribution",
    "ThetaVector",
    "TruncatedGaussian",
    "UCB1",
    "UCB1Normal",
    "UCB1Tuned",
    "UCB2",
    "UCBV",
    "compute_features",
    "draw_sample_points",
    "eda_optimize",
    "enumerate_formulas",
    "eval_formula",
    "evaluate_delta",
    "evaluate_policy",
    "format_formula",
    "formula_length",
    "index_power",
    "learn_power",
    "parse_formula",
    "parse_policy",
    "partition",
    "percent_wins",
    "run_episode",
    "run_experiment",
    "sample_problem",
    "sample_problems",
    "sample_reward",
    "search_best",
    "select_arm",
    "signature_of",
    "simulate_batch",
    "truncated_mean",
    "tune_policy",
    "uniform_race",
    "update_stats",
]
