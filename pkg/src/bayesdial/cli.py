"""Command-line surface: run experiments, one-shot planning, Dirichlet fitting.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dirichlet
from .beliefs import BeliefState
from .domain import load_domain
from .errors import BayesdialError
from .harness import ExperimentConfig, run_experiment
from .learner import LearnerConfig
from .models import build_model
from .planner import DialoguePlannerView, PlanConfig, plan


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bayesdial",
        description="Bayesian reinforcement learning for POMDP dialogue domains",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a learning experiment and write CSV results")
    run.add_argument("--domain", required=True, help="domain file (JSON)")
    run.add_argument("--model", choices=("multinomial", "rules"), default="multinomial")
    run.add_argument("--runs", type=int, default=1)
    run.add_argument("--episodes", type=int, default=1)
    run.add_argument("--horizon", type=int, default=2)
    run.add_argument("--gamma", type=float, default=0.95)
    run.add_argument("--topk-obs", type=int, default=4)
    run.add_argument("--theta-samples", type=int, default=1000)
    run.add_argument("--planner-noise", type=float, default=0.1)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True, help="detail CSV path (aggregate goes next to it)")
    run.add_argument("--workers", type=int, default=None, help="worker processes (default: cores)")
    run.add_argument("--dump-traces", default=None, help="directory for per-run turn traces")
    run.add_argument("--timing", action="store_true", help="write measured wall_ms (breaks byte reproducibility)")
    run.add_argument(
        "--kl-direction",
        choices=("actual_predicted", "predicted_actual"),
        default="actual_predicted",
    )

    planp = sub.add_parser("plan", help="one-shot action selection; prints Q per action")
    planp.add_argument("--domain", required=True)
    planp.add_argument("--belief", required=True, help="belief file (JSON)")
    planp.add_argument("--model", choices=("multinomial", "rules"), default="multinomial")
    planp.add_argument("--horizon", type=int, default=2)
    planp.add_argument("--gamma", type=float, default=0.95)
    planp.add_argument("--topk-obs", type=int, default=4)
    planp.add_argument("--planner-noise", type=float, default=0.1)

    fitp = sub.add_parser("fit-dirichlet", help="fit a Dirichlet to CSV rows of probability vectors")
    fitp.add_argument("--samples", required=True, help="CSV of sample rows (optional header)")
    fitp.add_argument("--weight-column", default=None, help="name or index of a weight column")
    return parser


def _load_belief(domain, path: str) -> BeliefState:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    context = list(c[0] for c in domain.context_values)
    for var, value in data.get("context", {}).items():
        if var not in domain.context_names:
            raise BayesdialError(f"belief file sets unknown context variable {var!r}")
        context[domain.context_names.index(var)] = value
    c_idx = domain.context_index(tuple(context))
    spec = data.get("intention", "uniform")
    probs = np.zeros((len(domain.intentions), len(domain.contexts)))
    if spec == "uniform":
        for i in domain.initial_belief:
            probs[domain.intentions.index(i), c_idx] = 1.0
    else:
        for intention, weight in spec.items():
            if intention not in domain.intentions:
                raise BayesdialError(f"belief file names unknown intention {intention!r}")
            probs[domain.intentions.index(intention), c_idx] = float(weight)
    return BeliefState(domain.intentions, domain.context_names, domain.contexts, probs / probs.sum())


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig(
        domain_path=args.domain,
        model_type=args.model,
        runs=args.runs,
        episodes=args.episodes,
        plan=PlanConfig(
            horizon=args.horizon,
            gamma=args.gamma,
            obs_top_k=args.topk_obs,
            planner_noise=args.planner_noise,
        ),
        learner=LearnerConfig(n_theta=args.theta_samples),
        seed=args.seed,
        out_path=args.out,
        workers=args.workers,
        dump_traces=args.dump_traces,
        timing=args.timing,
        kl_direction=args.kl_direction,
    )
    detail, aggregate, records = run_experiment(cfg)
    mean_return = sum(r.total_return for r in records) / len(records)
    print(f"wrote {detail} and {aggregate} ({len(records)} episodes, mean return {mean_return:.3f})")
    return 0


def _cmd_plan(args: argparse.Namespace) -> int:
    domain = load_domain(args.domain)
    belief = _load_belief(domain, args.belief)
    model = build_model(domain, args.model)
    cfg = PlanConfig(
        horizon=args.horizon,
        gamma=args.gamma,
        obs_top_k=args.topk_obs,
        planner_noise=args.planner_noise,
    )
    view = DialoguePlannerView(domain, model, cfg)
    result = plan(view, belief, cfg)
    for action, q in zip(domain.action_labels, result.q_values):
        marker = " *" if action == result.action else ""
        print(f"{action}\t{q:.6f}{marker}")
    print(f"selected: {result.action}")
    return 0


def _cmd_fit_dirichlet(args: argparse.Namespace) -> int:
    with Path(args.samples).open("r", newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise BayesdialError("samples file is empty")
    header: list[str] | None = None
    try:
        [float(x) for x in rows[0]]
    except ValueError:
        header = rows[0]
        rows = rows[1:]
    if not rows:
        raise BayesdialError("samples file has a header but no rows")
    weight_idx = None
    if args.weight_column is not None:
        if header is not None and args.weight_column in header:
            weight_idx = header.index(args.weight_column)
        else:
            try:
                weight_idx = int(args.weight_column)
            except ValueError:
                raise BayesdialError(f"weight column {args.weight_column!r} not found") from None
    matrix = np.array([[float(x) for x in row] for row in rows])
    weights = None
    if weight_idx is not None:
        weights = matrix[:, weight_idx]
        matrix = np.delete(matrix, weight_idx, axis=1)
        if header is not None:
            header = header[:weight_idx] + header[weight_idx + 1 :]
    labels = header if header is not None else [f"c{i}" for i in range(matrix.shape[1])]
    params = dirichlet.fit(matrix, weights, labels=tuple(labels))
    for label, alpha in zip(params.labels, params.alphas):
        print(f"{label}\t{alpha:.6f}")
    print(f"sum\t{params.alphas.sum():.6f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; this tool reserves 2 for runtime failures
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    handlers = {"run": _cmd_run, "plan": _cmd_plan, "fit-dirichlet": _cmd_fit_dirichlet}
    try:
        return handlers[args.command](args)
    except (BayesdialError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted; partial results flushed", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
