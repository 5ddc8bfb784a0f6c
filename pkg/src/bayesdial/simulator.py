"""Ground-truth user simulator with a Dirichlet-quality recognition channel.

The hidden user draws a next goal from the configured dynamics, utters an act
from the ground-truth policy, and the recognition channel draws a fresh
(correct, incorrect, none) quality triple from the noise Dirichlet each turn.
The emitted N-best list carries at most two entries: the top hypothesis with
confidence p_correct / (p_correct + p_incorrect), and one alternative at a
configurable share of the leftover mass (the true act when the top hypothesis
is wrong, a random confusion otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dirichlet import DirichletParams
from .distributions import Distribution
from .domain import DomainSpec, NBestList, SimulatorConfig
from .errors import DomainValidationError
from .models import MultinomialModel, _Cell


def _sample_index(vec: np.ndarray, rng: np.random.Generator) -> int:
    cum = np.cumsum(vec)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right").clip(0, len(vec) - 1))


class GroundTruth:
    """Compiled simulator tables: exact act policy and goal dynamics."""

    def __init__(self, domain: DomainSpec):
        if domain.simulator_config is None:
            raise DomainValidationError("domain carries no simulator section")
        self.domain = domain
        self.config: SimulatorConfig = domain.simulator_config
        self._acts = domain.user_acts
        self._intentions = domain.intentions
        nonterminal = [i for i in self._intentions if i not in domain.terminal_intentions]
        self._uniform_goal = np.zeros(len(self._intentions))
        for i in nonterminal:
            self._uniform_goal[self._intentions.index(i)] = 1.0 / len(nonterminal)
        self._new_goal = np.zeros(len(self._intentions))
        for label, w in self.config.new_goal:
            self._new_goal[self._intentions.index(label)] = w
        if self._new_goal.sum() > 0:
            self._new_goal /= self._new_goal.sum()
        init = np.zeros(len(self._intentions))
        for label, w in self.config.initial_intention:
            init[self._intentions.index(label)] = w
        self._initial = init / init.sum()
        self._goal_uses_context = any(
            any(v.startswith("context.") for v in row.condition.referenced_vars())
            for row in self.config.goal_rows
        )
        self._act_cache: dict = {}
        self._goal_cache: dict = {}
        self.noise = DirichletParams(("correct", "incorrect", "none"), np.array(self.config.noise_alphas))

    def _expand(self, dist, *, subject: str, target: str) -> np.ndarray:
        labels = self._acts if target == "act" else self._intentions
        vec = np.zeros(len(labels))
        for token, weight in dist:
            if token == "$express":
                act = self.domain.act_expressing(subject)
                if act is None:
                    raise DomainValidationError(f"no act expresses intention {subject!r}")
                vec[labels.index(act)] += weight
            elif token == "$persist":
                vec[labels.index(subject)] += weight
            elif token == "$uniform":
                vec += weight * self._uniform_goal
            elif token == "$new_goal":
                vec += weight * self._new_goal
            else:
                vec[labels.index(token)] += weight
        total = vec.sum()
        if total <= 0:
            raise DomainValidationError("simulator table row has zero total mass")
        return vec / total

    def act_policy(self, intention_next: str, action_label: str) -> np.ndarray:
        key = (intention_next, action_label)
        if key not in self._act_cache:
            action = self.domain.action(action_label)
            for row in self.config.act_rows:
                if row.condition.evaluate(action, intention_next=intention_next):
                    vec = self._expand(row.dist, subject=intention_next, target="act")
                    break
            else:
                raise DomainValidationError(
                    f"act policy has no row for intention {intention_next!r} under {action_label!r}"
                )
            self._act_cache[key] = vec
        return self._act_cache[key]

    def goal_dynamics(self, intention: str, action_label: str, context: tuple) -> np.ndarray:
        key = (intention, action_label, context if self._goal_uses_context else None)
        if key not in self._goal_cache:
            action = self.domain.action(action_label)
            ctx_map = dict(zip(self.domain.context_names, context))
            for row in self.config.goal_rows:
                if row.condition.evaluate(action, intention=intention, context=ctx_map):
                    vec = self._expand(row.dist, subject=intention, target="goal")
                    break
            else:
                raise DomainValidationError(
                    f"goal dynamics have no row for intention {intention!r} under {action_label!r}"
                )
            self._goal_cache[key] = vec
        return self._goal_cache[key]

    def initial_intention(self, rng: np.random.Generator) -> str:
        return self._intentions[_sample_index(self._initial, rng)]

    def initial_context(self, rng: np.random.Generator) -> tuple:
        values = {}
        for var, pairs in self.config.initial_context:
            weights = np.array([w for _, w in pairs])
            values[var] = pairs[_sample_index(weights, rng)][0]
        assignment = tuple(
            values.get(name, self.domain.context_values[i][0])
            for i, name in enumerate(self.domain.context_names)
        )
        return assignment


@dataclass(frozen=True)
class SimulatorState:
    tables: GroundTruth
    true_intention: str
    context: tuple
    turn: int = 0

    @property
    def domain(self) -> DomainSpec:
        return self.tables.domain


@dataclass(frozen=True)
class StepResult:
    true_act: str
    observation: NBestList
    state: "SimulatorState"


def new_simulator(domain: DomainSpec, rng: np.random.Generator, tables: GroundTruth | None = None) -> SimulatorState:
    tables = tables if tables is not None else GroundTruth(domain)
    return SimulatorState(
        tables=tables,
        true_intention=tables.initial_intention(rng),
        context=tables.initial_context(rng),
        turn=0,
    )


def step(sim: SimulatorState, action_label: str, rng: np.random.Generator) -> StepResult:
    """Advance the hidden user one turn and emit the noisy observation."""
    domain = sim.domain
    tables = sim.tables
    goal = tables.goal_dynamics(sim.true_intention, action_label, sim.context)
    next_intention = domain.intentions[_sample_index(goal, rng)]
    act_dist = tables.act_policy(next_intention, action_label)
    true_act = domain.user_acts[_sample_index(act_dist, rng)]

    quality = rng.dirichlet(tables.noise.alphas)
    outcome = _sample_index(quality, rng)
    acts = domain.user_acts
    share = tables.config.nbest_second_share
    if outcome == 2 or len(acts) < 2:
        observation = NBestList(())
    else:
        confidence = float(quality[0] / (quality[0] + quality[1]))
        confidence = min(max(confidence, 1e-9), 1.0)
        others = [a for a in acts if a != true_act]
        drawn = others[int(rng.integers(len(others)))]
        top, second = (true_act, drawn) if outcome == 0 else (drawn, true_act)
        entries = [(top, confidence)]
        second_conf = (1.0 - confidence) * share
        if second_conf > 1e-9:
            entries.append((second, second_conf))
        observation = NBestList(tuple(entries))

    next_state = SimulatorState(
        tables=tables,
        true_intention=next_intention,
        context=domain.shift_context(sim.context, action_label),
        turn=sim.turn + 1,
    )
    return StepResult(true_act, observation, next_state)


def actual_next_act_distribution(sim: SimulatorState, action_label: str) -> Distribution:
    """Exact P(next act) implied by the simulator's own tables given its hidden
    intention (the goal transition is marginalized; recognition noise plays no part)."""
    goal = sim.tables.goal_dynamics(sim.true_intention, action_label, sim.context)
    acts = np.zeros(len(sim.domain.user_acts))
    for j, weight in enumerate(goal):
        if weight > 0:
            acts += weight * sim.tables.act_policy(sim.domain.intentions[j], action_label)
    return Distribution(sim.domain.user_acts, acts / acts.sum())


def episode_done(sim: SimulatorState) -> bool:
    if sim.turn >= sim.tables.config.max_turns:
        return True
    return sim.true_intention in sim.domain.terminal_intentions


# ---------------------------------------------------------------------------
# exact model injection (oracle runs with learning switched off)
# ---------------------------------------------------------------------------


def true_multinomial_model(domain: DomainSpec, concentration: float = 1e7) -> MultinomialModel:
    """A MultinomialModel whose predictive tables match the simulator's ground
    truth (full per-action conditioning, near-deterministic Dirichlets)."""
    tables = GroundTruth(domain)
    acts = domain.user_acts
    intentions = domain.intentions
    act_params: dict = {}
    goal_params: dict = {}
    act_cells: dict = {}
    goal_cells: dict = {}
    act_cell_map: dict = {}
    goal_cell_map: dict = {}
    for action in domain.machine_actions:
        keys = []
        for intention in intentions:
            key = ("act", intention, ("a", action.label))
            keys.append(key)
            probs = tables.act_policy(intention, action.label)
            act_params[key] = DirichletParams(acts, concentration * probs + 1e-6)
            act_cells[key] = _Cell(key, {action.cls}, None, action.argument, intention)
        act_cell_map[action.label] = keys
        grid = []
        for ctx in domain.contexts:
            row = []
            for intention in intentions:
                key = ("goal", intention, ("a", action.label), ctx)
                row.append(key)
                probs = tables.goal_dynamics(intention, action.label, ctx)
                goal_params[key] = DirichletParams(intentions, concentration * probs + 1e-6)
                goal_cells[key] = _Cell(key, {action.cls}, None, action.argument, intention)
            grid.append(row)
        goal_cell_map[action.label] = grid
    return MultinomialModel(
        domain, act_params, goal_params, act_cells, goal_cells, act_cell_map, goal_cell_map
    )
