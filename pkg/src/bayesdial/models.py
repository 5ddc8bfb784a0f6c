"""Transition-model encodings: flat multinomial CPT collections and probabilistic rules.

Both expose the same predictive surface. For a machine action, a model yields
an act table P(next act | next intention) and a goal table
P(next intention | intention, context), built from its Dirichlet posteriors
(means by default, or one sampled parameter set). Rules act as templates:
their fired cases are ground out per conditional assignment, and rules
constraining the same output combine by multiplying likelihoods against the
output prior and renormalizing. A fired case's unlisted mass (the void effect)
spreads over the values its effects do not assert, proportionally to the
prior, so a lone rule asserts its listed effects exactly.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .bayesnet import Cpt, Network, Variable
from .beliefs import BeliefState
from .dirichlet import DirichletParams
from .distributions import Distribution
from .domain import CaseSpec, DomainSpec, MachineAction, RuleSpec, make_label
from .errors import RuleInstantiationError

VOID = "void"


# ---------------------------------------------------------------------------
# conditioning cells (multinomial model)
# ---------------------------------------------------------------------------


class _Cell:
    __slots__ = ("key", "member_classes", "group", "argument", "intention")

    def __init__(self, key, member_classes, group, argument, intention):
        self.key = key
        self.member_classes = member_classes
        self.group = group
        self.argument = argument
        self.intention = intention


def _resolve_entry(entries, cls: str):
    for entry in entries:
        if cls in entry.classes:
            return entry
    return None


def _action_key_part(entry, action: MachineAction):
    if "action" in entry.key_parts:
        return ("a", action.label)
    if "group" in entry.key_parts:
        return ("g", entry.group)
    return ("c", action.cls)


def _apply_overrides(alphas, labels, overrides, cell: _Cell, domain: DomainSpec, *, goal: bool):
    index = {label: i for i, label in enumerate(labels)}
    for ov in overrides:
        if ov.where_class is not None and not (
            ov.where_class in cell.member_classes or ov.where_class == cell.group
        ):
            continue
        if ov.where_relation is not None:
            if cell.argument is None or cell.intention is None:
                continue
            matched = cell.argument == cell.intention
            if (ov.where_relation == "match") != matched:
                continue
        for token, value in ov.alphas:
            target = None
            if token == "$express":
                if cell.intention is not None:
                    target = domain.act_expressing(cell.intention)
            elif token == "$persist":
                target = cell.intention if goal else None
            elif token == "$arg":
                target = cell.argument if goal else None
            else:
                target = token
            if target is not None and target in index:
                alphas[index[target]] = value
    return alphas


class MultinomialModel:
    """User-action and user-goal models as keyed collections of Dirichlets.

    Conditioning granularity comes from the domain's model_config: each action
    class resolves to cells keyed by any of (intention, action label, class,
    tying group, context assignment). Goal assignments without a learned cell
    fall back to deterministic intention persistence.
    """

    kind = "multinomial"

    def __init__(self, domain: DomainSpec, act_params, goal_params, act_cells, goal_cells,
                 act_cell_map, goal_cell_map):
        self.domain = domain
        self.act_params: dict = act_params
        self.goal_params: dict = goal_params
        self._act_cells = act_cells  # key -> _Cell
        self._goal_cells = goal_cells
        self._act_cell_map = act_cell_map  # action label -> list per intention idx of key | None
        self._goal_cell_map = goal_cell_map  # action label -> (n_c, n_i) nested lists of key | None
        self._act_tables: dict[str, np.ndarray] = {}
        self._goal_tables: dict[str, np.ndarray] = {}

    # -- construction -------------------------------------------------------

    @classmethod
    def from_domain(cls, domain: DomainSpec) -> "MultinomialModel":
        mc = domain.model_config
        intentions = domain.intentions
        acts = domain.user_acts
        act_cells: dict = {}
        goal_cells: dict = {}
        act_params: dict = {}
        goal_params: dict = {}
        act_cell_map: dict = {}
        goal_cell_map: dict = {}

        for action in domain.machine_actions:
            entry = _resolve_entry(mc.act_conditioning, action.cls)
            keys = []
            for intention in intentions:
                part = _action_key_part(entry, action)
                key = ("act",) + ((intention,) if "intention" in entry.key_parts else ()) + (part,)
                keys.append(key)
                if key not in act_cells:
                    cell = _Cell(
                        key,
                        set(entry.classes),
                        entry.group,
                        action.argument if part[0] == "a" else None,
                        intention if "intention" in entry.key_parts else None,
                    )
                    act_cells[key] = cell
                    alphas = np.full(len(acts), mc.default_alpha)
                    alphas = _apply_overrides(alphas, acts, mc.act_prior_overrides, cell, domain, goal=False)
                    act_params[key] = DirichletParams(acts, alphas)
            act_cell_map[action.label] = keys

            entry = _resolve_entry(mc.goal_conditioning, action.cls)
            grid = []
            for ctx in domain.contexts:
                row = []
                for intention in intentions:
                    if entry is None or (entry.intentions is not None and intention not in entry.intentions):
                        row.append(None)  # fixed persistence, nothing to learn
                        continue
                    part = _action_key_part(entry, action)
                    key = ("goal",) + ((intention,) if "intention" in entry.key_parts else ()) + (part,)
                    if "context" in entry.key_parts:
                        key = key + (ctx,)
                    row.append(key)
                    if key not in goal_cells:
                        cell = _Cell(
                            key,
                            set(entry.classes),
                            entry.group,
                            action.argument if part[0] == "a" else None,
                            intention if "intention" in entry.key_parts else None,
                        )
                        goal_cells[key] = cell
                        alphas = np.full(len(intentions), mc.default_alpha)
                        alphas = _apply_overrides(alphas, intentions, mc.goal_prior_overrides, cell, domain, goal=True)
                        goal_params[key] = DirichletParams(intentions, alphas)
                grid.append(row)
            goal_cell_map[action.label] = grid

        return cls(domain, act_params, goal_params, act_cells, goal_cells, act_cell_map, goal_cell_map)

    def with_updated(self, updates: Mapping) -> "MultinomialModel":
        act = dict(self.act_params)
        goal = dict(self.goal_params)
        for key, params in updates.items():
            if key in act:
                act[key] = params
            elif key in goal:
                goal[key] = params
            else:
                raise KeyError(f"unknown parameter cell {key!r}")
        return MultinomialModel(
            self.domain, act, goal, self._act_cells, self._goal_cells,
            self._act_cell_map, self._goal_cell_map,
        )

    # -- parameter access -----------------------------------------------------

    def parameter_count(self) -> int:
        return len(self.act_params) + len(self.goal_params)

    def act_cells_for(self, action_label: str) -> list:
        return self._act_cell_map[action_label]

    def goal_cells_for(self, action_label: str) -> list:
        return self._goal_cell_map[action_label]

    def sampled_values(self, rng: np.random.Generator) -> dict:
        values = {}
        for key, params in self.act_params.items():
            values[key] = rng.dirichlet(params.alphas)
        for key, params in self.goal_params.items():
            values[key] = rng.dirichlet(params.alphas)
        return values

    # -- predictive tables ----------------------------------------------------

    def act_table(self, action_label: str, values: Mapping | None = None) -> np.ndarray:
        """Rows P(next act | next intention) for one action; Dirichlet means by default."""
        if values is None and action_label in self._act_tables:
            return self._act_tables[action_label]
        table = np.empty((len(self.domain.intentions), len(self.domain.user_acts)))
        for i_idx, key in enumerate(self._act_cell_map[action_label]):
            if values is not None and key in values:
                row = values[key]
            else:
                params = self.act_params[key]
                row = params.alphas / params.alphas.sum()
            table[i_idx] = row
        table.setflags(write=False)
        if values is None:
            self._act_tables[action_label] = table
        return table

    def goal_table(self, action_label: str, values: Mapping | None = None) -> np.ndarray:
        """P(next intention | intention, context) shaped (contexts, intentions, intentions)."""
        if values is None and action_label in self._goal_tables:
            return self._goal_tables[action_label]
        n_i = len(self.domain.intentions)
        grid = self._goal_cell_map[action_label]
        table = np.empty((len(self.domain.contexts), n_i, n_i))
        eye = np.eye(n_i)
        for c_idx, row in enumerate(grid):
            for i_idx, key in enumerate(row):
                if key is None:
                    table[c_idx, i_idx] = eye[i_idx]
                elif values is not None and key in values:
                    table[c_idx, i_idx] = values[key]
                else:
                    params = self.goal_params[key]
                    table[c_idx, i_idx] = params.alphas / params.alphas.sum()
        table.setflags(write=False)
        if values is None:
            self._goal_tables[action_label] = table
        return table


# ---------------------------------------------------------------------------
# rule model
# ---------------------------------------------------------------------------


def _case_dims(case: CaseSpec) -> int:
    return len(case.effects) + (1 if case.include_void else 0)


def _param_labels(case: CaseSpec) -> tuple:
    labels = tuple(e.value for e in case.effects)
    return labels + ((VOID,) if case.include_void else ())


class RuleModel:
    """Ordered probabilistic rules whose parameterized cases carry Dirichlet posteriors."""

    kind = "rules"

    def __init__(self, domain: DomainSpec, params: dict):
        self.domain = domain
        self.rules: tuple[RuleSpec, ...] = domain.model_config.rules
        self.params: dict[str, DirichletParams] = params
        self._param_case: dict[str, tuple[RuleSpec, CaseSpec]] = {}
        uses_express = False
        for rule in self.rules:
            for case in rule.cases:
                if case.param is not None:
                    self._param_case[case.param] = (rule, case)
                if any(e.value == "$express_next" for e in case.effects):
                    uses_express = True
        if uses_express:
            missing = [i for i in domain.intentions if domain.act_expressing(i) is None]
            if missing:
                raise RuleInstantiationError(
                    f"$express_next used but no act expresses intentions {missing}"
                )
        for name in self._param_case:
            if name not in self.params:
                raise RuleInstantiationError(f"rule parameter {name!r} has no Dirichlet entry")
        self._act_rules = tuple(r for r in self.rules if r.output == "act")
        self._goal_rules = tuple(r for r in self.rules if r.output == "goal")
        self._goal_uses_context = any(
            any(v.startswith("context.") for v in case.condition.referenced_vars())
            for rule in self._goal_rules
            for case in rule.cases
        )
        self._act_tables: dict[str, np.ndarray] = {}
        self._goal_tables: dict[str, np.ndarray] = {}
        self._act_prior = np.full(len(domain.user_acts), 1.0 / len(domain.user_acts))
        self._goal_prior = np.full(len(domain.intentions), 1.0 / len(domain.intentions))

    @classmethod
    def from_domain(cls, domain: DomainSpec) -> "RuleModel":
        mc = domain.model_config
        priors = dict(mc.rule_priors)
        params: dict[str, DirichletParams] = {}
        for rule in mc.rules:
            for case in rule.cases:
                if case.param is None:
                    continue
                dims = _case_dims(case)
                labels = _param_labels(case)
                prior = priors.get(case.param)
                if prior is None:
                    alphas = np.full(dims, mc.default_alpha)
                elif isinstance(prior, tuple):
                    if len(prior) != dims:
                        raise RuleInstantiationError(
                            f"prior for {case.param!r} has {len(prior)} entries, case needs {dims}"
                        )
                    alphas = np.array(prior, dtype=float)
                else:
                    alphas = np.full(dims, float(prior))
                params[case.param] = DirichletParams(labels, alphas)
        return cls(domain, params)

    def with_updated(self, updates: Mapping[str, DirichletParams]) -> "RuleModel":
        params = dict(self.params)
        for name, value in updates.items():
            if name not in params:
                raise KeyError(f"unknown rule parameter {name!r}")
            params[name] = value
        return RuleModel(self.domain, params)

    def parameter_count(self) -> int:
        return len(self.params)

    def sampled_values(self, rng: np.random.Generator) -> dict:
        return {name: rng.dirichlet(p.alphas) for name, p in self.params.items()}

    # -- rule grounding -------------------------------------------------------

    def _fired_case(self, rule: RuleSpec, action: MachineAction, *, intention=None,
                    intention_next=None, context=None) -> CaseSpec | None:
        for case in rule.cases:
            if case.condition.evaluate(
                action, intention=intention, intention_next=intention_next, context=context
            ):
                return case
        return None

    def _effect_indices(self, case: CaseSpec, *, output_labels, row_intention, action) -> list[int]:
        indices = []
        for effect in case.effects:
            if effect.value == "$express_next":
                value = self.domain.act_expressing(row_intention)
            elif effect.value == "$persist":
                value = row_intention
            else:
                value = effect.value
            if value is None or value not in output_labels:
                raise RuleInstantiationError(f"effect {effect.value!r} not resolvable in output vocabulary")
            indices.append(output_labels.index(value))
        if len(set(indices)) != len(indices):
            raise RuleInstantiationError("rule effects collapse onto the same output value")
        return indices

    def _case_probs(self, case: CaseSpec, values: Mapping | None) -> np.ndarray:
        if case.param is not None:
            if values is not None and case.param in values:
                vec = np.asarray(values[case.param], dtype=float)
            else:
                params = self.params[case.param]
                vec = params.alphas / params.alphas.sum()
            return vec
        fixed = np.array([e.prob for e in case.effects], dtype=float)
        if case.include_void:
            fixed = np.append(fixed, max(0.0, 1.0 - fixed.sum()))
        return fixed

    def _likelihood_factor(self, case: CaseSpec, prior: np.ndarray, *, output_labels,
                           row_intention, action, values) -> np.ndarray:
        """ell(v) = P_case(v) / prior(v): listed effects get their exact probabilities,
        the void remainder spreads over unlisted values proportionally to the prior."""
        indices = self._effect_indices(
            case, output_labels=output_labels, row_intention=row_intention, action=action
        )
        probs = self._case_probs(case, values)
        eff = probs[: len(indices)]
        void = float(probs[len(indices):].sum())
        ell = np.zeros(len(prior))
        unlisted = np.ones(len(prior), dtype=bool)
        unlisted[indices] = False
        tail = prior[unlisted].sum()
        if tail > 0:
            ell[unlisted] = void / tail
        else:
            # every value listed: leftover mass spreads over all of them by the prior
            eff = eff + void * prior[indices] / prior[indices].sum() if void > 0 else eff
        ell[indices] = eff / prior[indices]
        return ell

    def _combine(self, fired, prior, *, output_labels, row_intention, action, values) -> np.ndarray:
        row = prior.copy()
        for case in fired:
            row = row * self._likelihood_factor(
                case, prior, output_labels=output_labels,
                row_intention=row_intention, action=action, values=values,
            )
        total = row.sum()
        if total <= 0:
            raise RuleInstantiationError(
                f"rules assign zero mass to every output value for action {action.label!r}"
            )
        return row / total

    def act_table(self, action_label: str, values: Mapping | None = None) -> np.ndarray:
        if values is None and action_label in self._act_tables:
            return self._act_tables[action_label]
        action = self.domain.action(action_label)
        acts = self.domain.user_acts
        table = np.empty((len(self.domain.intentions), len(acts)))
        for i_idx, intention in enumerate(self.domain.intentions):
            fired = []
            for rule in self._act_rules:
                case = self._fired_case(rule, action, intention_next=intention)
                if case is not None:
                    fired.append(case)
            table[i_idx] = self._combine(
                fired, self._act_prior, output_labels=acts,
                row_intention=intention, action=action, values=values,
            )
        table.setflags(write=False)
        if values is None:
            self._act_tables[action_label] = table
        return table

    def goal_table(self, action_label: str, values: Mapping | None = None) -> np.ndarray:
        if values is None and action_label in self._goal_tables:
            return self._goal_tables[action_label]
        action = self.domain.action(action_label)
        intentions = self.domain.intentions
        n_i = len(intentions)
        contexts = self.domain.contexts if self._goal_uses_context else ((),)
        rows = np.empty((len(contexts), n_i, n_i))
        for c_idx, ctx in enumerate(contexts):
            ctx_map = dict(zip(self.domain.context_names, ctx)) if self._goal_uses_context else None
            for i_idx, intention in enumerate(intentions):
                fired = []
                for rule in self._goal_rules:
                    case = self._fired_case(rule, action, intention=intention, context=ctx_map)
                    if case is not None:
                        fired.append(case)
                rows[c_idx, i_idx] = self._combine(
                    fired, self._goal_prior, output_labels=intentions,
                    row_intention=intention, action=action, values=values,
                )
        if not self._goal_uses_context:
            rows = np.broadcast_to(rows, (len(self.domain.contexts), n_i, n_i))
        table = np.array(rows)
        table.setflags(write=False)
        if values is None:
            self._goal_tables[action_label] = table
        return table

    # -- incidence and substitution (used by the learner) -----------------------

    def act_param_rows(self, action_label: str) -> dict[str, list[int]]:
        """For each act-rule parameter: intention rows where its case is the fired one."""
        action = self.domain.action(action_label)
        out: dict[str, list[int]] = {}
        for i_idx, intention in enumerate(self.domain.intentions):
            for rule in self._act_rules:
                case = self._fired_case(rule, action, intention_next=intention)
                if case is not None and case.param is not None:
                    out.setdefault(case.param, []).append(i_idx)
        return out

    def goal_param_rows(self, action_label: str) -> dict[str, list[tuple[int, int]]]:
        action = self.domain.action(action_label)
        out: dict[str, list[tuple[int, int]]] = {}
        contexts = self.domain.contexts
        for c_idx, ctx in enumerate(contexts):
            ctx_map = dict(zip(self.domain.context_names, ctx))
            for i_idx, intention in enumerate(self.domain.intentions):
                for rule in self._goal_rules:
                    case = self._fired_case(rule, action, intention=intention, context=ctx_map)
                    if case is not None and case.param is not None:
                        out.setdefault(case.param, []).append((c_idx, i_idx))
        return out

    def rows_with_substituted(
        self, action_label: str, param: str, thetas: np.ndarray, rows: list, *, output: str
    ) -> np.ndarray:
        """Recompute output rows with `param` swapped for each theta sample.

        `rows` are intention indices (output="act") or (context, intention)
        pairs (output="goal"); returns an array (n_samples, len(rows), K).
        """
        action = self.domain.action(action_label)
        rule, target_case = self._param_case[param]
        if output == "act":
            prior, labels = self._act_prior, self.domain.user_acts
            rules = self._act_rules
        else:
            prior, labels = self._goal_prior, self.domain.intentions
            rules = self._goal_rules
        n = thetas.shape[0]
        out = np.empty((n, len(rows), len(labels)))
        for r_pos, row_ref in enumerate(rows):
            if output == "act":
                intention = self.domain.intentions[row_ref]
                ctx_map = None
                kwargs = dict(intention_next=intention)
            else:
                c_idx, i_idx = row_ref
                intention = self.domain.intentions[i_idx]
                ctx_map = dict(zip(self.domain.context_names, self.domain.contexts[c_idx]))
                kwargs = dict(intention=intention, context=ctx_map)
            others = prior.copy()
            for other_rule in rules:
                case = self._fired_case(other_rule, action, **kwargs)
                if case is None or case is target_case:
                    continue
                others = others * self._likelihood_factor(
                    case, prior, output_labels=labels,
                    row_intention=intention, action=action, values=None,
                )
            indices = self._effect_indices(
                target_case, output_labels=labels, row_intention=intention, action=action
            )
            n_eff = len(indices)
            unlisted = np.ones(len(labels), dtype=bool)
            unlisted[indices] = False
            tail = prior[unlisted].sum()
            ell = np.zeros((n, len(labels)))
            if target_case.include_void:
                void = thetas[:, n_eff:].sum(axis=1)
            else:
                void = np.zeros(n)
            if tail > 0:
                ell[:, unlisted] = (void / tail)[:, None]
            ell[:, indices] = thetas[:, :n_eff] / prior[indices][None, :]
            combined = others[None, :] * ell
            totals = combined.sum(axis=1, keepdims=True)
            totals[totals <= 0] = 1.0
            out[:, r_pos, :] = combined / totals
        return out

    # -- pretty printer ---------------------------------------------------------

    def describe(self) -> str:
        lines = []
        for rule in self.rules:
            target = "next act" if rule.output == "act" else "next intention"
            lines.append(f"rule {rule.name} -> {target}:")
            for pos, case in enumerate(rule.cases):
                cond = _condition_text(case.condition)
                head = "if" if pos == 0 else "elif"
                lines.append(f"  {head} {cond} then")
                probs = self._case_probs(case, None)
                for j, effect in enumerate(case.effects):
                    source = f"{case.param}[{j}]" if case.param else "fixed"
                    lines.append(f"    {effect.value}: {probs[j]:.4f} ({source})")
                if case.include_void:
                    lines.append(f"    void: {probs[len(case.effects)]:.4f}")
            lines.append("  else void")
        return "\n".join(lines)


def _condition_text(cond) -> str:
    if cond.kind == "true":
        return "always"
    if cond.kind == "atom":
        var, op, value = cond.atom
        shown = "<argument>" if value == "$arg" else value
        if op == "in":
            return f"{var} in {{{', '.join(value)}}}"
        return f"{var} {'=' if op == 'eq' else '!='} {shown}"
    if cond.kind == "not":
        return f"not ({_condition_text(cond.children[0])})"
    joiner = " and " if cond.kind == "all" else " or "
    return joiner.join(
        f"({_condition_text(c)})" if c.kind in ("all", "any") else _condition_text(c)
        for c in cond.children
    )


# ---------------------------------------------------------------------------
# shared predictive operations
# ---------------------------------------------------------------------------

TransitionModel = MultinomialModel | RuleModel


def predicted_intention(model: TransitionModel, belief: BeliefState, action_label: str,
                        values: Mapping | None = None) -> np.ndarray:
    """P(next intention | belief, action), before any observation arrives."""
    goal = model.goal_table(action_label, values)
    return np.einsum("cij,ic->j", goal, belief.probs)


def predict_user_act(
    model: TransitionModel,
    belief: BeliefState,
    action_label: str,
    mode: str = "mean",
    rng: np.random.Generator | None = None,
) -> Distribution:
    """Marginal over the user's next act given the belief and a machine action.

    mode="mean" uses posterior means; mode="sample" draws every parameter once.
    """
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode requires an rng")
        values = model.sampled_values(rng)
    elif mode == "mean":
        values = None
    else:
        raise ValueError(f"unknown prediction mode {mode!r}")
    pred = predicted_intention(model, belief, action_label, values)
    act = model.act_table(action_label, values)
    return Distribution.from_weights(model.domain.user_acts, act.T @ pred)


def instantiate(
    model: TransitionModel,
    belief: BeliefState,
    action_label: str,
    mode: str = "mean",
    rng: np.random.Generator | None = None,
) -> Network:
    """Extend the belief network with next-step intention and act nodes for one action."""
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode requires an rng")
        values = model.sampled_values(rng)
    else:
        values = None
    domain = model.domain
    goal = model.goal_table(action_label, values)  # (n_c, n_i, n_i)
    act = model.act_table(action_label, values)  # (n_i, K)
    base = belief.as_network()
    next_cpt = np.transpose(goal, (1, 0, 2))  # parents (intention, context)
    return Network(
        list(base.variables)
        + [Variable("intention_next", domain.intentions), Variable("act_next", domain.user_acts)],
        [
            base.cpt("context"),
            base.cpt("intention"),
            Cpt("intention_next", ("intention", "context"), next_cpt),
            Cpt("act_next", ("intention_next",), act),
        ],
    )


def parameter_count(model: TransitionModel) -> int:
    return model.parameter_count()


def build_model(domain: DomainSpec, model_type: str) -> TransitionModel:
    if model_type == "multinomial":
        return MultinomialModel.from_domain(domain)
    if model_type == "rules":
        return RuleModel.from_domain(domain)
    raise ValueError(f"unknown model type {model_type!r}")
