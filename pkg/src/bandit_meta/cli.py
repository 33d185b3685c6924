"""Command-line front end.

Exit codes: 0 on success, 2 on configuration errors (bad arguments, bad
config files, bad policy specs), 3 on stage failures during execution.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import rng as rngmod
from .eda import learn_power, tune_policy
from .formulas import (
    count_formulas,
    draw_sample_points,
    enumerate_formulas,
    format_formula,
    formula_length,
    partition,
    read_representatives,
    write_representatives,
)
from .harness import (
    ConfigError,
    ExperimentSpec,
    ProblemDistribution,
    evaluate_policy,
    percent_wins,
    read_problems,
    run_experiment,
    sample_problems,
    write_problems,
)
from .policies import PolicySpecError, parse_policy
from .power import save_theta
from .search import search_best, write_ranking


def _dist_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dist", default="bernoulli",
                        choices=["bernoulli", "gaussian", "truncated_gaussian"],
                        help="problem distribution (gaussian = truncated_gaussian)")
    parser.add_argument("--arms", type=int, default=2, help="arms per problem")


def _make_dist(args) -> ProblemDistribution:
    kind = "truncated_gaussian" if args.dist == "gaussian" else args.dist
    return ProblemDistribution(kind=kind, k=args.arms)


def _load_or_sample_problems(args):
    if getattr(args, "problems", None):
        return read_problems(args.problems)
    dist = _make_dist(args)
    rng = rngmod.derive_rng(args.seed, rngmod.TEST_PROBLEMS)
    return sample_problems(dist, args.n_problems, rng)


def cmd_sample_problems(args) -> int:
    dist = _make_dist(args)
    rng = rngmod.derive_rng(args.seed, rngmod.TEST_PROBLEMS)
    problems = sample_problems(dist, args.count, rng)
    write_problems(args.out, problems)
    print(f"wrote {len(problems)} problems to {args.out}")
    return 0


def cmd_eval_policy(args) -> int:
    policy = parse_policy(args.policy)
    problems = _load_or_sample_problems(args)
    result = evaluate_policy(policy, problems, args.horizon, args.runs, args.seed)
    payload = {
        "policy": policy.spec_string,
        "horizon": args.horizon,
        "runs": args.runs,
        "n_problems": len(problems),
        "seed": args.seed,
        "mean_regret": result.mean_regret,
        "stderr": result.stderr,
    }
    if args.baseline:
        payload["win_vs_baseline"] = percent_wins(
            policy, parse_policy(args.baseline), problems,
            args.horizon, args.runs, args.seed,
        )
        payload["baseline"] = args.baseline
    if args.out:
        payload["per_problem"] = [float(x) for x in result.per_problem]
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
        del payload["per_problem"]
    print(json.dumps(payload, indent=2))
    return 0


def cmd_tune(args) -> int:
    problems = _load_or_sample_problems(args)
    result = tune_policy(
        args.policy, problems, args.horizon, args.seed,
        i_max=args.i_max, n_p=args.population, b=args.elite,
    )
    payload = {
        "policy_spec": result.policy_spec,
        "params": [float(x) for x in result.params],
        "train_delta": result.best_delta,
        "trace": [
            {
                "means": [float(x) for x in it.means],
                "variances": [float(x) for x in it.variances],
                "best_score": it.best_score,
            }
            for it in result.trace
        ],
    }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
    print(result.policy_spec)
    print(f"train delta {result.best_delta!r}")
    return 0


def cmd_learn_numeric(args) -> int:
    problems = _load_or_sample_problems(args)
    result = learn_power(
        args.degree, problems, args.horizon, args.seed,
        i_max=args.i_max, n_p=args.population, b=args.elite,
    )
    save_theta(args.out, result.theta)
    print(f"power:P={args.degree},theta=@{args.out}")
    print(f"train delta {result.best_delta!r}")
    return 0


def cmd_enumerate_formulas(args) -> int:
    if args.count_only:
        print(count_formulas(args.max_length))
        return 0
    written = 0
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for f in enumerate_formulas(args.max_length):
            out.write(json.dumps({
                "expr": format_formula(f),
                "length": formula_length(f),
            }) + "\n")
            written += 1
    finally:
        if args.out:
            out.close()
    if args.out:
        print(f"wrote {written} formulas to {args.out}")
    return 0


def cmd_cluster_formulas(args) -> int:
    samples = draw_sample_points(args.samples, args.seed, mode=args.sample_mode,
                                 t_max=args.t_max)
    result = partition(args.max_length, samples,
                       verify_collisions=not args.no_verify)
    write_representatives(args.out, result)
    print(json.dumps({
        "enumerated": result.total_enumerated,
        "invalid": result.total_invalid,
        "invalid_fraction": result.invalid_fraction,
        "classes": len(result.classes),
        "out": args.out,
    }, indent=2))
    return 0


def cmd_search_formula(args) -> int:
    records = read_representatives(args.representatives)
    formulas = [rec["formula"] for rec in records]
    dist = _make_dist(args)
    train_rng = rngmod.derive_rng(args.seed, rngmod.TRAIN_PROBLEMS)
    problems = (read_problems(args.problems) if args.problems
                else sample_problems(dist, args.n_problems, train_rng))
    result = search_best(formulas, problems, args.horizon, args.budget, args.seed)
    write_ranking(args.out, result, extra={
        "n_problems": len(problems),
        "problem_source": args.problems or f"{dist.kind}(seed={args.seed})",
    })
    top = result.best
    print(f"best formula: {top.expr} (mean reward {top.mean_reward!r}, "
          f"{top.pulls} pulls)")
    print(f"wrote ranking to {args.out}")
    return 0


def cmd_benchmark(args) -> int:
    with open(args.config) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    spec = ExperimentSpec.from_dict(raw)
    report = run_experiment(spec)
    if args.json_out:
        with open(args.json_out, "w") as fh:
            fh.write(report.to_json())
    if args.csv_out:
        with open(args.csv_out, "w") as fh:
            fh.write(report.to_csv())
    print(report.to_csv(), end="")
    if report.status != "complete":
        print(f"stage failure in {report.failed_stage}: {report.error}", file=sys.stderr)
        return 3
    return 0


def cmd_report(args) -> int:
    with open(args.json_report) as fh:
        payload = json.load(fh)
    spec = ExperimentSpec.from_dict(payload["config"])
    report_rows = payload["results"]
    from .harness import ExperimentReport
    report = ExperimentReport(
        spec=spec, rows=report_rows, stages=payload.get("stages", {}),
        status=payload.get("status", "complete"),
        failed_stage=payload.get("failed_stage"),
        error=payload.get("error"),
    )
    text = report.to_csv()
    if args.csv_out:
        with open(args.csv_out, "w") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bandit-meta",
        description="Meta-learning of exploration/exploitation strategies "
                    "for finite-horizon bandits",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress of long stages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-problems", help="draw problems from a prior")
    _dist_args(p)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sample_problems)

    p = sub.add_parser("eval-policy", help="mean regret of one policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--baseline", help="also report win rate against this policy")
    _dist_args(p)
    p.add_argument("--problems", help="problems JSONL (overrides --dist sampling)")
    p.add_argument("--n-problems", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", help="write full JSON incl. per-problem regrets")
    p.set_defaults(fn=cmd_eval_policy)

    p = sub.add_parser("tune", help="EDA-tune a generic policy's parameters")
    p.add_argument("--policy", required=True,
                   choices=["ucb1", "ucb2", "ucbv", "klucb", "epsgreedy"])
    _dist_args(p)
    p.add_argument("--problems")
    p.add_argument("--n-problems", type=int, default=100)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--i-max", type=int, default=100)
    p.add_argument("--population", type=int, default=None)
    p.add_argument("--elite", type=int, default=None)
    p.add_argument("--out", help="write JSON trace")
    p.set_defaults(fn=cmd_tune)

    p = sub.add_parser("learn-numeric", help="EDA-learn a Power-P policy")
    p.add_argument("--degree", "-P", type=int, default=1)
    _dist_args(p)
    p.add_argument("--problems")
    p.add_argument("--n-problems", type=int, default=100)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--i-max", type=int, default=100)
    p.add_argument("--population", type=int, default=None)
    p.add_argument("--elite", type=int, default=None)
    p.add_argument("--out", required=True, help="theta JSON path")
    p.set_defaults(fn=cmd_learn_numeric)

    p = sub.add_parser("enumerate-formulas", help="stream the formula grammar")
    p.add_argument("--max-length", "-L", type=int, required=True)
    p.add_argument("--count-only", action="store_true")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_enumerate_formulas)

    p = sub.add_parser("cluster-formulas",
                       help="partition formulas into equivalence classes")
    p.add_argument("--max-length", "-L", type=int, required=True)
    p.add_argument("--samples", type=int, default=1024)
    p.add_argument("--sample-mode", choices=["bernoulli", "uniform"],
                   default="bernoulli")
    p.add_argument("--t-max", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--no-verify", action="store_true",
                   help="skip collision verification (saves memory)")
    p.add_argument("--out", required=True, help="representatives JSONL path")
    p.set_defaults(fn=cmd_cluster_formulas)

    p = sub.add_parser("search-formula",
                       help="race clustered formulas with a pure-exploration bandit")
    p.add_argument("--representatives", required=True)
    _dist_args(p)
    p.add_argument("--problems")
    p.add_argument("--n-problems", type=int, default=100)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True, help="ranked JSONL path")
    p.set_defaults(fn=cmd_search_formula)

    p = sub.add_parser("benchmark", help="run a full experiment config")
    p.add_argument("--config", required=True, help="experiment JSON")
    p.add_argument("--json-out")
    p.add_argument("--csv-out")
    p.set_defaults(fn=cmd_benchmark)

    p = sub.add_parser("report", help="regenerate the CSV table from a JSON report")
    p.add_argument("--json-report", required=True)
    p.add_argument("--csv-out")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO,
                            format="%(asctime)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, PolicySpecError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # anything else is a stage failure
        print(f"stage failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
