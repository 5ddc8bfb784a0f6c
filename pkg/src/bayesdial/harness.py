"""Experiment driver: learning episodes, metrics, CSV output, seed management.

A run owns one model posterior learned across its episodes; the belief and the
simulator reset per episode. Detail CSV schema (one row per run x episode):
run,episode,return,mean_kl,turns,wall_ms. The aggregate file carries
per-episode means across runs: episode,mean_return,se_return,mean_kl,se_kl.
Per-run RNG streams derive from the master seed and the run index, so results
are byte-identical for a repeated seed regardless of worker count (wall_ms is
written as 0 unless timing is requested, since measured time is not
reproducible).
"""

from __future__ import annotations

import concurrent.futures
import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .beliefs import BeliefState
from .distributions import Distribution
from .domain import DialogueState, DomainSpec, load_domain, reward, reward_matrix
from .errors import SupportMismatchError
from .learner import LearnerConfig, LearnerState, learner_step
from .models import build_model, predict_user_act
from .planner import DialoguePlannerView, PlanConfig, plan
from .simulator import (
    GroundTruth,
    SimulatorState,
    actual_next_act_distribution,
    episode_done,
    new_simulator,
    step,
)

log = logging.getLogger(__name__)

KL_EPSILON = 1e-6

DETAIL_HEADER = ("run", "episode", "return", "mean_kl", "turns", "wall_ms")
AGGREGATE_HEADER = ("episode", "mean_return", "se_return", "mean_kl", "se_kl")
TRACE_HEADER = (
    "episode", "turn", "action", "intention", "true_act", "observed_top", "reward", "kl"
)


def kl_divergence(p: Distribution, q: Distribution, *, epsilon: float = KL_EPSILON) -> float:
    """KL(p || q) in nats with q epsilon-smoothed and renormalized; 0 ln 0 = 0."""
    if p.support != q.support:
        raise SupportMismatchError("KL needs both distributions over the same support")
    smoothed = (q.probs + epsilon) / (q.probs.sum() + epsilon * len(q.probs))
    mask = p.probs > 0
    value = float(np.sum(p.probs[mask] * np.log(p.probs[mask] / smoothed[mask])))
    return value if value > 0.0 else 0.0


@dataclass(frozen=True)
class EpisodeRecord:
    run_id: int
    episode: int
    total_return: float
    mean_kl: float
    turns: int
    wall_ms: float


@dataclass(frozen=True)
class ExperimentConfig:
    domain_path: str
    model_type: str = "multinomial"
    runs: int = 1
    episodes: int = 1
    plan: PlanConfig = field(default_factory=PlanConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    seed: int = 0
    out_path: str = "results.csv"
    workers: int | None = None
    dump_traces: str | None = None
    timing: bool = False
    kl_direction: str = "actual_predicted"  # or "predicted_actual"

    def __post_init__(self) -> None:
        if self.runs < 1 or self.episodes < 1:
            raise ValueError("runs and episodes must be >= 1")
        if self.model_type not in ("multinomial", "rules"):
            raise ValueError(f"unknown model type {self.model_type!r}")
        if self.kl_direction not in ("actual_predicted", "predicted_actual"):
            raise ValueError(f"unknown kl_direction {self.kl_direction!r}")


def initial_belief(domain: DomainSpec, context: tuple) -> BeliefState:
    """Episode-start belief: uniform over the configured intentions, the known context."""
    probs = np.zeros((len(domain.intentions), len(domain.contexts)))
    c_idx = domain.context_index(context)
    for intention in domain.initial_belief:
        probs[domain.intentions.index(intention), c_idx] = 1.0
    return BeliefState(domain.intentions, domain.context_names, domain.contexts, probs / probs.sum())


def run_episode(
    domain: DomainSpec,
    ls: LearnerState,
    sim: SimulatorState,
    rng: np.random.Generator,
    plan_cfg: PlanConfig,
    *,
    policy: Callable[[BeliefState], str] | None = None,
    kl_direction: str = "actual_predicted",
    run_id: int = 0,
    episode: int = 0,
    rewards_table: np.ndarray | None = None,
    trace: list | None = None,
) -> tuple[EpisodeRecord, LearnerState, SimulatorState]:
    """Play one episode: act, observe, learn, record return and per-turn KL."""
    started = time.perf_counter()
    total = 0.0
    kls: list[float] = []
    last_act: str | None = None
    while True:
        view = DialoguePlannerView(domain, ls.model, plan_cfg, rewards=rewards_table)
        if policy is not None:
            action = policy(ls.belief)
        else:
            action = plan(view, ls.belief, plan_cfg).action
        predicted = predict_user_act(ls.model, ls.belief, action)
        actual = actual_next_act_distribution(sim, action)
        if kl_direction == "actual_predicted":
            turn_kl = kl_divergence(actual, predicted)
        else:
            turn_kl = kl_divergence(predicted, actual)
        turn_reward = reward(
            domain, DialogueState(last_act, sim.true_intention, sim.context), action
        )
        intention_before = sim.true_intention
        result = step(sim, action, rng)
        ls = learner_step(ls, action, result.observation, rng)
        total += turn_reward
        kls.append(turn_kl)
        if trace is not None:
            trace.append(
                (
                    episode,
                    result.state.turn,
                    action,
                    intention_before,
                    result.true_act,
                    result.observation.top() or "",
                    turn_reward,
                    turn_kl,
                )
            )
        last_act = result.true_act
        sim = result.state
        if episode_done(sim):
            break
    wall_ms = (time.perf_counter() - started) * 1000.0
    record = EpisodeRecord(run_id, episode, total, sum(kls) / len(kls), len(kls), wall_ms)
    return record, ls, sim


def run_single(cfg: ExperimentConfig, run_id: int) -> list[EpisodeRecord]:
    """All episodes of one run; the model posterior persists across episodes."""
    domain = load_domain(cfg.domain_path)
    rng = np.random.default_rng([cfg.seed, run_id])
    model = build_model(domain, cfg.model_type)
    tables = GroundTruth(domain)
    rewards_table = reward_matrix(domain)
    trace_rows: list | None = [] if cfg.dump_traces else None
    records = []
    ls = LearnerState(domain, model, domain.uniform_belief(), cfg.learner)
    for episode in range(cfg.episodes):
        sim = new_simulator(domain, rng, tables)
        ls.belief = initial_belief(domain, sim.context)
        record, ls, _ = run_episode(
            domain,
            ls,
            sim,
            rng,
            cfg.plan,
            kl_direction=cfg.kl_direction,
            run_id=run_id,
            episode=episode,
            rewards_table=rewards_table,
            trace=trace_rows,
        )
        records.append(record)
    if ls.degenerate_updates:
        log.info("run %d: %d degenerate parameter updates kept their prior", run_id, ls.degenerate_updates)
    if cfg.dump_traces:
        trace_dir = Path(cfg.dump_traces)
        trace_dir.mkdir(parents=True, exist_ok=True)
        path = trace_dir / f"trace_{cfg.model_type}_run{run_id:03d}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for row in trace_rows or []:
                writer.writerow(
                    row[:6] + (_fmt(row[6]), _fmt(row[7]))
                )
    return records


def _fmt(x: float) -> str:
    value = round(float(x), 6)
    if value == 0.0:
        value = 0.0  # avoid -0.000000
    return f"{value:.6f}"


def aggregate_records(records: Iterable[EpisodeRecord]) -> list[tuple]:
    by_episode: dict[int, list[EpisodeRecord]] = {}
    for rec in records:
        by_episode.setdefault(rec.episode, []).append(rec)
    rows = []
    for episode in sorted(by_episode):
        recs = by_episode[episode]
        returns = np.array([r.total_return for r in recs])
        kls = np.array([r.mean_kl for r in recs])
        n = len(recs)
        se_r = float(returns.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        se_k = float(kls.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        rows.append((episode, float(returns.mean()), se_r, float(kls.mean()), se_k))
    return rows


def aggregate_path_for(out_path: str | Path) -> Path:
    out = Path(out_path)
    return out.with_name(out.stem + "_aggregate" + (out.suffix or ".csv"))


def write_detail_csv(path: str | Path, records: Iterable[EpisodeRecord], *, timing: bool) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DETAIL_HEADER)
        for rec in records:
            wall = int(round(rec.wall_ms)) if timing else 0
            writer.writerow(
                (rec.run_id, rec.episode, _fmt(rec.total_return), _fmt(rec.mean_kl), rec.turns, wall)
            )


def write_aggregate_csv(path: str | Path, rows: Iterable[tuple]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_HEADER)
        for episode, mean_r, se_r, mean_k, se_k in rows:
            writer.writerow((episode, _fmt(mean_r), _fmt(se_r), _fmt(mean_k), _fmt(se_k)))


def run_experiment(cfg: ExperimentConfig) -> tuple[Path, Path, list[EpisodeRecord]]:
    """Execute runs x episodes, write the detail and aggregate CSV files.

    Runs are independent; completed runs are flushed (in run order) if the
    experiment is interrupted.
    """
    load_domain(cfg.domain_path)  # fail fast on a bad domain before spawning workers
    workers = cfg.workers if cfg.workers is not None else (os.cpu_count() or 1)
    results: dict[int, list[EpisodeRecord]] = {}
    interrupted = False
    try:
        if workers <= 1 or cfg.runs == 1:
            for run_id in range(cfg.runs):
                results[run_id] = run_single(cfg, run_id)
        else:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                futures = {pool.submit(run_single, cfg, run_id): run_id for run_id in range(cfg.runs)}
                for future in concurrent.futures.as_completed(futures):
                    results[futures[future]] = future.result()
    except KeyboardInterrupt:
        interrupted = True
        log.warning("interrupted; flushing %d completed runs", len(results))
    records = [rec for run_id in sorted(results) for rec in results[run_id]]
    detail = Path(cfg.out_path)
    detail.parent.mkdir(parents=True, exist_ok=True)
    write_detail_csv(detail, records, timing=cfg.timing)
    aggregate = aggregate_path_for(cfg.out_path)
    write_aggregate_csv(aggregate, aggregate_records(records))
    if interrupted:
        raise KeyboardInterrupt
    return detail, aggregate, records
