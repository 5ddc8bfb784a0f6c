"""Dialogue domain definition: vocabulary, rewards, model configuration, file I/O.

A domain file is a single JSON document (schema_version 1) with sections:

  intentions            list of intention labels
  terminal_intentions   subset of intentions ending an episode (may be empty)
  user_acts             list of dialogue-act labels
  machine_actions       list of action definitions; either
                          {"label": "AskRepeat", "kind": "conversational"}
                        or a parameterized template expanded at load time
                          {"template": "Confirm(X)", "kind": "conversational",
                           "arguments": "intentions" | [labels...]}
  context_vars          {name: [values...]}, may be empty
  context_effects       [{"action": label-or-template, "set": {var: value}}]
  rewards               ordered entries, first match wins, unmatched pairs -> 0:
                          {"action": "Execute(X)"-style pattern or exact label,
                           "when": "match" | "mismatch" | condition object,
                           "value": number}
  model_config          priors, conditioning granularity and rule definitions
  simulator             ground-truth tables and recognition-noise settings
  initial_belief        optional list of intentions the tracker starts uniform over

Condition objects are conjunctions of the listed keys, with "all"/"any"/"not"
for nesting: action, action_class, relation ("match"/"mismatch" against the
action argument), intention, intention_ne, intention_in, intention_next,
intention_next_ne, intention_next_in, user_act, and "context.<var>". The
special value "$arg" refers to the acting machine action's argument.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .beliefs import BeliefState
from .errors import DomainParseError, DomainValidationError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def split_label(label: str) -> tuple[str, str | None]:
    """Split "Confirm(MoveLeft)" into ("Confirm", "MoveLeft"); plain labels get (label, None)."""
    if "(" in label and label.endswith(")"):
        head, _, rest = label.partition("(")
        return head, rest[:-1]
    return label, None


def make_label(cls: str, argument: str | None) -> str:
    return f"{cls}({argument})" if argument is not None else cls


@dataclass(frozen=True)
class MachineAction:
    label: str
    cls: str
    argument: str | None
    kind: str  # "conversational" | "physical"


@dataclass(frozen=True)
class DialogueState:
    """Factored hidden state: last user act (None before the first turn), intention, context."""

    a_u: str | None
    i_u: str
    context: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "context", tuple(self.context))


@dataclass(frozen=True)
class NBestList:
    """Recognition hypotheses: (act, confidence) pairs; may be empty (no recognition)."""

    entries: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        entries = tuple((str(a), float(p)) for a, p in self.entries)
        object.__setattr__(self, "entries", entries)
        labels = [a for a, _ in entries]
        if len(set(labels)) != len(labels):
            raise ValueError("N-best list has duplicate labels")
        for _, p in entries:
            if not (0.0 < p <= 1.0):
                raise ValueError("N-best probabilities must lie in (0, 1]")
        if sum(p for _, p in entries) > 1.0 + 1e-9:
            raise ValueError("N-best probabilities sum to more than 1")

    def __bool__(self) -> bool:
        return bool(self.entries)

    def top(self) -> str | None:
        return self.entries[0][0] if self.entries else None


# ---------------------------------------------------------------------------
# condition language (shared by rewards, rules and simulator tables)
# ---------------------------------------------------------------------------

_ATOM_VARS = ("action", "action_class", "intention", "intention_next", "user_act")


@dataclass(frozen=True)
class Condition:
    kind: str  # "true" | "atom" | "all" | "any" | "not"
    atom: tuple | None = None  # (var, op, value); op in {"eq", "ne", "in"}
    children: tuple["Condition", ...] = ()

    def evaluate(
        self,
        action: MachineAction,
        intention: str | None = None,
        intention_next: str | None = None,
        user_act: str | None = None,
        context: Mapping[str, Any] | None = None,
    ) -> bool:
        if self.kind == "true":
            return True
        if self.kind == "all":
            return all(c.evaluate(action, intention, intention_next, user_act, context) for c in self.children)
        if self.kind == "any":
            return any(c.evaluate(action, intention, intention_next, user_act, context) for c in self.children)
        if self.kind == "not":
            return not self.children[0].evaluate(action, intention, intention_next, user_act, context)
        var, op, value = self.atom
        if var == "action":
            actual = action.label
        elif var == "action_class":
            actual = action.cls
        elif var == "intention":
            actual = intention
        elif var == "intention_next":
            actual = intention_next
        elif var == "user_act":
            actual = user_act
        elif var.startswith("context."):
            actual = None if context is None else context.get(var[len("context."):])
        else:  # pragma: no cover - guarded at parse time
            raise ValueError(f"unknown condition variable {var}")
        if op == "in":
            return actual is not None and actual in value
        resolved = action.argument if value == "$arg" else value
        if actual is None or resolved is None:
            return False
        return (actual == resolved) if op == "eq" else (actual != resolved)

    def referenced_vars(self) -> set[str]:
        if self.kind == "atom":
            return {self.atom[0]}
        out: set[str] = set()
        for c in self.children:
            out |= c.referenced_vars()
        return out


TRUE_CONDITION = Condition("true")


def parse_condition(spec: Mapping[str, Any] | None, *, relation_subject: str) -> Condition:
    """Parse a JSON condition; `relation_subject` tells which intention variable
    "relation"/"match" shorthand binds to ("intention" or "intention_next")."""
    if not spec:
        return TRUE_CONDITION
    parts: list[Condition] = []
    for key, value in spec.items():
        if key == "all":
            parts.extend(parse_condition(v, relation_subject=relation_subject) for v in value)
        elif key == "any":
            parts.append(
                Condition("any", children=tuple(parse_condition(v, relation_subject=relation_subject) for v in value))
            )
        elif key == "not":
            parts.append(
                Condition("not", children=(parse_condition(value, relation_subject=relation_subject),))
            )
        elif key == "relation":
            if value not in ("match", "mismatch"):
                raise DomainValidationError(f"relation must be match/mismatch, got {value!r}")
            op = "eq" if value == "match" else "ne"
            parts.append(Condition("atom", (relation_subject, op, "$arg")))
        elif key in _ATOM_VARS or key.startswith("context."):
            parts.append(Condition("atom", (key, "eq", value)))
        elif key.endswith("_ne") and key[:-3] in _ATOM_VARS:
            parts.append(Condition("atom", (key[:-3], "ne", value)))
        elif key.endswith("_in") and key[:-3] in _ATOM_VARS:
            parts.append(Condition("atom", (key[:-3], "in", tuple(value))))
        else:
            raise DomainValidationError(f"unknown condition key {key!r}")
    if not parts:
        return TRUE_CONDITION
    if len(parts) == 1:
        return parts[0]
    return Condition("all", children=tuple(parts))


def condition_to_json(cond: Condition) -> dict | None:
    if cond.kind == "true":
        return None
    if cond.kind == "atom":
        var, op, value = cond.atom
        if op == "eq":
            return {var: value}
        if op == "ne":
            return {f"{var}_ne": value}
        return {f"{var}_in": list(value)}
    if cond.kind == "not":
        return {"not": condition_to_json(cond.children[0])}
    key = cond.kind  # "all" | "any"
    return {key: [condition_to_json(c) for c in cond.children]}


# ---------------------------------------------------------------------------
# rewards
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RewardEntry:
    action_class: str
    action_argument: str | None  # None = wildcard when pattern carried one
    wildcard: bool
    condition: Condition
    value: float

    def matches(self, state: DialogueState, action: MachineAction, context_names: tuple[str, ...]) -> bool:
        if action.cls != self.action_class:
            return False
        if not self.wildcard and action.argument != self.action_argument:
            return False
        ctx = dict(zip(context_names, state.context))
        return self.condition.evaluate(
            action, intention=state.i_u, user_act=state.a_u, context=ctx
        )


# ---------------------------------------------------------------------------
# model configuration
# ---------------------------------------------------------------------------

_KEY_PARTS_ACT = {"intention", "class", "action", "group"}
_KEY_PARTS_GOAL = {"intention", "class", "action", "group", "context"}


@dataclass(frozen=True)
class ConditioningEntry:
    classes: tuple[str, ...]
    key_parts: tuple[str, ...]
    group: str | None = None
    intentions: tuple[str, ...] | None = None


@dataclass(frozen=True)
class PriorOverride:
    where_class: str | None
    where_relation: str | None
    alphas: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class EffectSpec:
    value: str  # output value, or "$express_next" / "$persist"
    prob: float | None = None


@dataclass(frozen=True)
class CaseSpec:
    condition: Condition
    effects: tuple[EffectSpec, ...]
    param: str | None
    include_void: bool


@dataclass(frozen=True)
class RuleSpec:
    name: str
    output: str  # "act" | "goal"
    cases: tuple[CaseSpec, ...]


@dataclass(frozen=True)
class ModelConfig:
    default_alpha: float
    act_conditioning: tuple[ConditioningEntry, ...]
    goal_conditioning: tuple[ConditioningEntry, ...]
    act_prior_overrides: tuple[PriorOverride, ...]
    goal_prior_overrides: tuple[PriorOverride, ...]
    rules: tuple[RuleSpec, ...]
    rule_priors: tuple[tuple[str, tuple[float, ...] | float], ...]


@dataclass(frozen=True)
class TableRow:
    condition: Condition
    dist: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class SimulatorConfig:
    initial_intention: tuple[tuple[str, float], ...]
    initial_context: tuple[tuple[str, tuple[tuple[Any, float], ...]], ...]
    goal_rows: tuple[TableRow, ...]
    act_rows: tuple[TableRow, ...]
    new_goal: tuple[tuple[str, float], ...]
    noise_alphas: tuple[float, ...]
    nbest_second_share: float
    max_turns: int


# ---------------------------------------------------------------------------
# the domain itself
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainSpec:
    name: str
    schema_version: int
    intentions: tuple[str, ...]
    terminal_intentions: tuple[str, ...]
    user_acts: tuple[str, ...]
    action_defs: tuple[tuple, ...]  # normalized definitions, used for save round-trips
    machine_actions: tuple[MachineAction, ...]
    context_names: tuple[str, ...]
    context_values: tuple[tuple, ...]
    context_effects: tuple[tuple[str, tuple[tuple[str, Any], ...]], ...]
    reward_entries: tuple[RewardEntry, ...]
    model_config: ModelConfig
    simulator_config: SimulatorConfig | None
    initial_belief: tuple[str, ...]
    _derived: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        d = self._derived
        d["action_by_label"] = {a.label: a for a in self.machine_actions}
        contexts: list[tuple] = [()]
        for values in self.context_values:
            contexts = [c + (v,) for c in contexts for v in values]
        d["contexts"] = tuple(contexts)
        d["context_index"] = {c: i for i, c in enumerate(contexts)}
        express = {}
        for act in self.user_acts:
            _, arg = split_label(act)
            if arg is not None and arg in self.intentions and arg not in express:
                express[arg] = act
        d["express"] = express
        effects = {label: dict(changes) for label, changes in self.context_effects}
        shifts = {}
        for label, changes in effects.items():
            mapping = np.arange(len(contexts), dtype=int)
            for idx, ctx in enumerate(contexts):
                new = list(ctx)
                for var, value in changes.items():
                    new[self.context_names.index(var)] = value
                mapping[idx] = d["context_index"][tuple(new)]
            shifts[label] = mapping
        d["context_shifts"] = shifts

    # -- vocabulary helpers -------------------------------------------------

    @property
    def action_labels(self) -> tuple[str, ...]:
        return tuple(a.label for a in self.machine_actions)

    def action(self, label: str) -> MachineAction:
        try:
            return self._derived["action_by_label"][label]
        except KeyError:
            raise DomainValidationError(f"unknown machine action {label!r}") from None

    @property
    def contexts(self) -> tuple[tuple, ...]:
        return self._derived["contexts"]

    def context_index(self, assignment: Sequence) -> int:
        return self._derived["context_index"][tuple(assignment)]

    def state_space_size(self) -> int:
        return len(self.user_acts) * len(self.intentions) * len(self.contexts)

    def act_expressing(self, intention: str) -> str | None:
        return self._derived["express"].get(intention)

    def context_shift(self, action_label: str) -> np.ndarray | None:
        """Index map old-context -> new-context for the action's declared effects."""
        return self._derived["context_shifts"].get(action_label)

    def shift_context(self, context: tuple, action_label: str) -> tuple:
        shift = self.context_shift(action_label)
        if shift is None:
            return tuple(context)
        return self.contexts[shift[self.context_index(context)]]

    def uniform_belief(self, over: Sequence[str] | None = None) -> BeliefState:
        active = tuple(over) if over is not None else self.initial_belief
        return BeliefState.uniform(self.intentions, self.context_names, self.contexts, over=active)

    def validate_state(self, state: DialogueState) -> None:
        if state.a_u is not None and state.a_u not in self.user_acts:
            raise DomainValidationError(f"unknown user act {state.a_u!r}")
        if state.i_u not in self.intentions:
            raise DomainValidationError(f"unknown intention {state.i_u!r}")
        if tuple(state.context) not in self._derived["context_index"]:
            raise DomainValidationError(f"unknown context assignment {state.context!r}")


# ---------------------------------------------------------------------------
# reward model
# ---------------------------------------------------------------------------


def reward(domain: DomainSpec, state: DialogueState, action_label: str) -> float:
    """First matching reward entry's value; 0 when nothing matches."""
    action = domain.action(action_label)
    for entry in domain.reward_entries:
        if entry.matches(state, action, domain.context_names):
            return entry.value
    return 0.0


def reward_matrix(domain: DomainSpec) -> np.ndarray:
    """R[action, intention, context] for rewards not conditioned on the user act."""
    for entry in domain.reward_entries:
        if "user_act" in entry.condition.referenced_vars():
            raise DomainValidationError(
                "reward entries conditioned on the user act cannot be tabulated over (intention, context)"
            )
    contexts = domain.contexts
    out = np.zeros((len(domain.machine_actions), len(domain.intentions), len(contexts)))
    for a_idx, action in enumerate(domain.machine_actions):
        for i_idx, intention in enumerate(domain.intentions):
            for c_idx, ctx in enumerate(contexts):
                out[a_idx, i_idx, c_idx] = reward(
                    domain, DialogueState(None, intention, ctx), action.label
                )
    return out


def belief_reward(domain: DomainSpec, belief: BeliefState, action_label: str) -> float:
    """Expected reward under the belief: sum_s R(s, a) b(s)."""
    action = domain.action(action_label)
    total = 0.0
    for i_idx, intention in enumerate(belief.intentions):
        for c_idx, ctx in enumerate(belief.contexts):
            p = belief.probs[i_idx, c_idx]
            if p == 0.0:
                continue
            total += p * reward(domain, DialogueState(None, intention, ctx), action.label)
    return total


# ---------------------------------------------------------------------------
# parsing / validation
# ---------------------------------------------------------------------------


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise DomainValidationError(message)


def _parse_actions(raw: list, intentions: tuple[str, ...]) -> tuple[tuple[tuple, ...], tuple[MachineAction, ...]]:
    defs: list[tuple] = []
    actions: list[MachineAction] = []
    seen: set[str] = set()
    for item in raw:
        kind = item.get("kind", "conversational")
        _require(kind in ("conversational", "physical"), f"bad action kind {kind!r}")
        if "template" in item:
            cls, placeholder = split_label(item["template"])
            _require(placeholder is not None, f"template {item['template']!r} carries no argument")
            args = item.get("arguments", "intentions")
            if args == "intentions":
                arg_values: Sequence[str] = intentions
            else:
                arg_values = tuple(args)
                for a in arg_values:
                    _require(a in intentions, f"action template argument {a!r} is not an intention")
            defs.append(("template", item["template"], kind, tuple(arg_values) if args != "intentions" else "intentions"))
            for arg in arg_values:
                label = make_label(cls, arg)
                _require(label not in seen, f"duplicate machine action {label!r}")
                seen.add(label)
                actions.append(MachineAction(label, cls, arg, kind))
        else:
            label = item["label"]
            _require(label not in seen, f"duplicate machine action {label!r}")
            seen.add(label)
            cls, arg = split_label(label)
            defs.append(("label", label, kind))
            actions.append(MachineAction(label, cls, arg, kind))
    _require(len(actions) > 0, "machine_actions must be non-empty")
    return tuple(defs), tuple(actions)


def _parse_reward_entry(item: Mapping, actions: tuple[MachineAction, ...], intentions) -> RewardEntry:
    pattern = item["action"]
    cls, arg = split_label(pattern)
    # an argument that is no real action argument (conventionally X or *) is a class wildcard
    wildcard = arg is not None and arg not in {a.argument for a in actions}
    when = item.get("when")
    if isinstance(when, str):
        when = {"relation": when}
    condition = parse_condition(when, relation_subject="intention")
    entry = RewardEntry(
        action_class=cls,
        action_argument=None if wildcard else arg,
        wildcard=wildcard,
        condition=condition,
        value=float(item["value"]),
    )
    matched = [
        a
        for a in actions
        if a.cls == entry.action_class and (entry.wildcard or a.argument == entry.action_argument)
    ]
    _require(bool(matched), f"reward pattern {pattern!r} matches no machine action")
    for var in condition.referenced_vars():
        _require(
            var in ("action", "action_class", "intention", "user_act") or var.startswith("context."),
            f"reward condition references {var!r}",
        )
    return entry


def _parse_conditioning(raw: list, classes_available: set[str], *, goal: bool, intentions) -> tuple[ConditioningEntry, ...]:
    entries = []
    allowed = _KEY_PARTS_GOAL if goal else _KEY_PARTS_ACT
    for item in raw:
        classes = tuple(item["classes"])
        for c in classes:
            _require(c in classes_available, f"conditioning references unknown action class {c!r}")
        key_parts = tuple(item["key"].split("+"))
        for part in key_parts:
            _require(part in allowed, f"bad conditioning key part {part!r}")
        _require(
            sum(p in ("class", "action", "group") for p in key_parts) == 1,
            "conditioning key needs exactly one of class/action/group",
        )
        group = item.get("group")
        _require(("group" in key_parts) == (group is not None), "group key part needs a group name")
        restrict = item.get("intentions")
        if restrict is not None:
            restrict = tuple(restrict)
            for i in restrict:
                _require(i in intentions, f"conditioning restricted to unknown intention {i!r}")
        entries.append(ConditioningEntry(classes, key_parts, group, restrict))
    return tuple(entries)


def _parse_overrides(raw: list) -> tuple[PriorOverride, ...]:
    out = []
    for item in raw:
        where = item.get("where", {})
        out.append(
            PriorOverride(
                where_class=where.get("class"),
                where_relation=where.get("relation"),
                alphas=tuple((k, float(v)) for k, v in item["alphas"].items()),
            )
        )
    return tuple(out)


def _parse_rules(raw: list, intentions, user_acts, context_names=()) -> tuple[RuleSpec, ...]:
    rules = []
    for item in raw:
        output = item["output"]
        _require(output in ("act", "goal"), f"rule output must be act/goal, got {output!r}")
        subject = "intention_next" if output == "act" else "intention"
        cases = []
        for case in item["cases"]:
            condition = parse_condition(case.get("when"), relation_subject=subject)
            allowed_vars = {"action", "action_class", subject}
            if output == "goal":
                allowed_vars |= {f"context.{n}" for n in context_names}
            for var in condition.referenced_vars():
                _require(
                    var in allowed_vars,
                    f"rule {item['name']!r} ({output}) may not reference {var!r}",
                )
            effects = []
            raw_effects = case["effects"]
            for eff in raw_effects:
                if isinstance(eff, str):
                    value, prob = eff, None
                else:
                    value, prob = eff["value"], eff.get("prob")
                if value == "$each_intention":
                    _require(output == "goal", "$each_intention only applies to goal rules")
                    effects.extend(EffectSpec(i, prob) for i in intentions)
                    continue
                if value not in ("$express_next", "$persist"):
                    vocab = user_acts if output == "act" else intentions
                    _require(value in vocab, f"rule effect {value!r} is not in the output vocabulary")
                if value == "$persist":
                    _require(output == "goal", "$persist only applies to goal rules")
                if value == "$express_next":
                    _require(output == "act", "$express_next only applies to act rules")
                effects.append(EffectSpec(value, prob))
            param = case.get("param")
            include_void = bool(case.get("void", True))
            fixed = [e.prob for e in effects if e.prob is not None]
            if param is not None:
                _require(not fixed, "a parameterized case cannot also carry fixed probabilities")
            else:
                _require(len(fixed) == len(effects), "a fixed case must give a probability per effect")
                total = sum(fixed)
                _require(total <= 1.0 + 1e-9, "fixed effect probabilities exceed 1")
                if not include_void:
                    _require(abs(total - 1.0) <= 1e-9, "void-less fixed case must sum to 1")
            values = [e.value for e in effects]
            _require(len(set(values)) == len(values), "duplicate effect values in one case")
            cases.append(CaseSpec(condition, tuple(effects), param, include_void))
        rules.append(RuleSpec(item["name"], output, tuple(cases)))
    names = [r.name for r in rules]
    _require(len(set(names)) == len(names), "duplicate rule names")
    return tuple(rules)


def _parse_table_rows(raw: list, *, subject: str) -> tuple[TableRow, ...]:
    rows = []
    for item in raw:
        condition = parse_condition(item.get("when"), relation_subject=subject)
        rows.append(TableRow(condition, tuple((k, float(v)) for k, v in item["dist"].items())))
    return tuple(rows)


def _parse_simulator(raw: Mapping, intentions, user_acts, context_names, context_values) -> SimulatorConfig:
    init = raw.get("initial_intention", "uniform")
    if init == "uniform":
        pairs = tuple((i, 1.0) for i in intentions)
    elif isinstance(init, Mapping) and "uniform_over" in init:
        for i in init["uniform_over"]:
            _require(i in intentions, f"initial intention {i!r} unknown")
        pairs = tuple((i, 1.0) for i in init["uniform_over"])
    else:
        for i in init:
            _require(i in intentions, f"initial intention {i!r} unknown")
        pairs = tuple((i, float(v)) for i, v in init.items())

    ctx_init = []
    declared = dict(zip(context_names, context_values))
    for var, spec in raw.get("initial_context", {}).items():
        _require(var in declared, f"initial context for unknown variable {var!r}")
        if isinstance(spec, Mapping):
            for v in spec:
                _require(v in declared[var], f"unknown value {v!r} for context variable {var!r}")
            ctx_init.append((var, tuple((v, float(w)) for v, w in spec.items())))
        else:
            _require(spec in declared[var], f"unknown value {spec!r} for context variable {var!r}")
            ctx_init.append((var, ((spec, 1.0),)))

    new_goal = tuple((i, float(v)) for i, v in raw.get("new_goal", {}).items())
    for i, _ in new_goal:
        _require(i in intentions, f"new_goal references unknown intention {i!r}")

    noise = tuple(float(x) for x in raw.get("noise_alphas", (5.4, 0.52, 1.6)))
    _require(len(noise) == 3 and all(x > 0 for x in noise), "noise_alphas must be 3 positive numbers")

    cfg = SimulatorConfig(
        initial_intention=pairs,
        initial_context=tuple(ctx_init),
        goal_rows=_parse_table_rows(raw.get("goal_dynamics", []), subject="intention"),
        act_rows=_parse_table_rows(raw.get("act_policy", []), subject="intention_next"),
        new_goal=new_goal,
        noise_alphas=noise,
        nbest_second_share=float(raw.get("nbest_second_share", 0.5)),
        max_turns=int(raw.get("max_turns", 20)),
    )
    _require(cfg.max_turns >= 1, "max_turns must be >= 1")
    for row in cfg.goal_rows + cfg.act_rows:
        for token, weight in row.dist:
            _require(weight >= 0, "negative simulator table weight")
            if token.startswith("$"):
                _require(
                    token in ("$express", "$persist", "$new_goal", "$uniform"),
                    f"unknown simulator table token {token!r}",
                )
            else:
                _require(
                    token in intentions or token in user_acts,
                    f"simulator table references unknown label {token!r}",
                )
    return cfg


def build_domain(data: Mapping[str, Any]) -> DomainSpec:
    """Validate a parsed domain document and construct the immutable DomainSpec."""
    _require(int(data.get("schema_version", -1)) == SCHEMA_VERSION, "unsupported schema_version")
    intentions = tuple(data["intentions"])
    user_acts = tuple(data["user_acts"])
    for name, labels in (("intentions", intentions), ("user_acts", user_acts)):
        _require(len(labels) > 0, f"{name} must be non-empty")
        _require(len(set(labels)) == len(labels), f"{name} contains duplicates")
    terminal = tuple(data.get("terminal_intentions", ()))
    for t in terminal:
        _require(t in intentions, f"terminal intention {t!r} unknown")

    action_defs, actions = _parse_actions(data["machine_actions"], intentions)

    context_names = tuple(data.get("context_vars", {}))
    context_values = tuple(tuple(v) for v in data.get("context_vars", {}).values())
    for name, values in zip(context_names, context_values):
        _require(len(values) > 0, f"context variable {name!r} has no values")
        _require(len(set(values)) == len(values), f"context variable {name!r} has duplicate values")

    effects = []
    for item in data.get("context_effects", []):
        target = item["action"]
        matched = [a.label for a in actions if a.label == target]
        if not matched:
            cls, arg = split_label(target)
            matched = [a.label for a in actions if a.cls == cls and (arg is None or arg == a.argument)]
        _require(bool(matched), f"context effect for unknown action {target!r}")
        changes = []
        for var, value in item["set"].items():
            _require(var in context_names, f"context effect sets unknown variable {var!r}")
            _require(
                value in context_values[context_names.index(var)],
                f"context effect sets {var!r} to unknown value {value!r}",
            )
            changes.append((var, value))
        for label in matched:
            effects.append((label, tuple(changes)))
    _require(len({label for label, _ in effects}) == len(effects), "duplicate context effects")

    rewards = tuple(_parse_reward_entry(item, actions, intentions) for item in data.get("rewards", []))

    mc = data.get("model_config", {})
    classes_available = {a.cls for a in actions}
    model_config = ModelConfig(
        default_alpha=float(mc.get("default_alpha", 2.0)),
        act_conditioning=_parse_conditioning(
            mc.get("user_action_model", {}).get("conditioning", [{"classes": sorted(classes_available), "key": "intention+action"}]),
            classes_available,
            goal=False,
            intentions=intentions,
        ),
        goal_conditioning=_parse_conditioning(
            mc.get("user_goal_model", {}).get("conditioning", [{"classes": sorted(classes_available), "key": "intention+action"}]),
            classes_available,
            goal=True,
            intentions=intentions,
        ),
        act_prior_overrides=_parse_overrides(mc.get("user_action_model", {}).get("prior_overrides", [])),
        goal_prior_overrides=_parse_overrides(mc.get("user_goal_model", {}).get("prior_overrides", [])),
        rules=_parse_rules(mc.get("rules", []), intentions, user_acts, context_names),
        rule_priors=tuple(
            (k, tuple(float(x) for x in v) if isinstance(v, (list, tuple)) else float(v))
            for k, v in mc.get("rule_priors", {}).items()
        ),
    )
    _require(model_config.default_alpha > 0, "default_alpha must be positive")
    act_classes_covered = {c for e in model_config.act_conditioning for c in e.classes}
    _require(
        classes_available <= act_classes_covered,
        f"user_action_model conditioning misses classes {sorted(classes_available - act_classes_covered)}",
    )
    param_names = [c.param for r in model_config.rules for c in r.cases if c.param is not None]
    _require(len(set(param_names)) == len(param_names), "duplicate rule parameter names")
    for name, prior in model_config.rule_priors:
        _require(name in param_names, f"rule prior for unknown parameter {name!r}")

    sim_raw = data.get("simulator")
    simulator_config = (
        _parse_simulator(sim_raw, intentions, user_acts, context_names, context_values)
        if sim_raw is not None
        else None
    )

    initial_belief = tuple(data.get("initial_belief", [i for i in intentions if i not in terminal]))
    for i in initial_belief:
        _require(i in intentions, f"initial_belief references unknown intention {i!r}")
    _require(len(initial_belief) > 0, "initial_belief must be non-empty")

    spec = DomainSpec(
        name=str(data.get("name", "domain")),
        schema_version=SCHEMA_VERSION,
        intentions=intentions,
        terminal_intentions=terminal,
        user_acts=user_acts,
        action_defs=action_defs,
        machine_actions=actions,
        context_names=context_names,
        context_values=context_values,
        context_effects=tuple(effects),
        reward_entries=rewards,
        model_config=model_config,
        simulator_config=simulator_config,
        initial_belief=initial_belief,
    )
    _require(spec.state_space_size() > 0, "state space is empty")
    return spec


def load_domain(path: str | Path) -> DomainSpec:
    """Load and validate a domain file, raising DomainParseError / DomainValidationError."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DomainParseError(f"{path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return build_domain(data)
    except DomainValidationError as exc:
        raise DomainValidationError(f"{path}: {exc}") from None


def domain_to_json(spec: DomainSpec) -> dict:
    def rule_to_json(rule: RuleSpec) -> dict:
        cases = []
        for case in rule.cases:
            item: dict[str, Any] = {}
            when = condition_to_json(case.condition)
            if when is not None:
                item["when"] = when
            if case.param is not None:
                item["effects"] = [e.value for e in case.effects]
                item["param"] = case.param
            else:
                item["effects"] = [{"value": e.value, "prob": e.prob} for e in case.effects]
            if not case.include_void:
                item["void"] = False
            cases.append(item)
        return {"name": rule.name, "output": rule.output, "cases": cases}

    def override_to_json(o: PriorOverride) -> dict:
        where = {}
        if o.where_class is not None:
            where["class"] = o.where_class
        if o.where_relation is not None:
            where["relation"] = o.where_relation
        return {"where": where, "alphas": dict(o.alphas)}

    def conditioning_to_json(e: ConditioningEntry) -> dict:
        out: dict[str, Any] = {"classes": list(e.classes), "key": "+".join(e.key_parts)}
        if e.group is not None:
            out["group"] = e.group
        if e.intentions is not None:
            out["intentions"] = list(e.intentions)
        return out

    data: dict[str, Any] = {
        "schema_version": spec.schema_version,
        "name": spec.name,
        "intentions": list(spec.intentions),
        "terminal_intentions": list(spec.terminal_intentions),
        "user_acts": list(spec.user_acts),
        "machine_actions": [],
        "context_vars": {n: list(v) for n, v in zip(spec.context_names, spec.context_values)},
        "context_effects": [
            {"action": label, "set": dict(changes)} for label, changes in spec.context_effects
        ],
        "rewards": [],
        "initial_belief": list(spec.initial_belief),
    }
    for d in spec.action_defs:
        if d[0] == "template":
            entry = {"template": d[1], "kind": d[2]}
            if d[3] != "intentions":
                entry["arguments"] = list(d[3])
            data["machine_actions"].append(entry)
        else:
            data["machine_actions"].append({"label": d[1], "kind": d[2]})
    for e in spec.reward_entries:
        pattern = make_label(e.action_class, "X") if e.wildcard else make_label(e.action_class, e.action_argument)
        item: dict[str, Any] = {"action": pattern, "value": e.value}
        when = condition_to_json(e.condition)
        if when is not None:
            item["when"] = when
        data["rewards"].append(item)

    mc = spec.model_config
    data["model_config"] = {
        "default_alpha": mc.default_alpha,
        "user_action_model": {
            "conditioning": [conditioning_to_json(e) for e in mc.act_conditioning],
            "prior_overrides": [override_to_json(o) for o in mc.act_prior_overrides],
        },
        "user_goal_model": {
            "conditioning": [conditioning_to_json(e) for e in mc.goal_conditioning],
            "prior_overrides": [override_to_json(o) for o in mc.goal_prior_overrides],
        },
        "rules": [rule_to_json(r) for r in mc.rules],
        "rule_priors": {k: (list(v) if isinstance(v, tuple) else v) for k, v in mc.rule_priors},
    }
    if spec.simulator_config is not None:
        sc = spec.simulator_config

        def rows_to_json(rows: tuple[TableRow, ...]) -> list:
            out = []
            for row in rows:
                item: dict[str, Any] = {"dist": dict(row.dist)}
                when = condition_to_json(row.condition)
                if when is not None:
                    item["when"] = when
                else:
                    item["when"] = {}
                out.append(item)
            return out

        data["simulator"] = {
            "initial_intention": dict(sc.initial_intention),
            "initial_context": {
                var: (dict(pairs) if len(pairs) > 1 else pairs[0][0]) for var, pairs in sc.initial_context
            },
            "goal_dynamics": rows_to_json(sc.goal_rows),
            "act_policy": rows_to_json(sc.act_rows),
            "new_goal": dict(sc.new_goal),
            "noise_alphas": list(sc.noise_alphas),
            "nbest_second_share": sc.nbest_second_share,
            "max_turns": sc.max_turns,
        }
    return data


def save_domain(spec: DomainSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(domain_to_json(spec), indent=2) + "\n", encoding="utf-8")
