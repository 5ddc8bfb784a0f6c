"""Belief filtering and Bayesian posterior updates of the transition model.

The belief over (intention, context) is filtered after every system action and
N-best observation: the goal model pushes the belief forward, the act model
turns the N-best list into a likelihood over next intentions, and declared
context effects of the executed action shift the context axis deterministically.

Parameter posteriors are kept as independent Dirichlets and updated by
assumed-density filtering: for every entry with enough belief mass behind its
conditioning assignment, draw parameter samples from the current posterior,
weight them by the observation likelihood marginalized over the (pre-update)
belief with all other entries at their means, and refit a Dirichlet to the
weighted samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bayesnet import apply_evidence, query_marginal
from .beliefs import BeliefState
from .dirichlet import DirichletParams, fit
from .domain import DomainSpec, NBestList
from .errors import DegenerateSamplesError, ZeroProbabilityEvidenceError
from .models import MultinomialModel, RuleModel, TransitionModel, instantiate

ALPHA_FLOOR = 1e-6


@dataclass(frozen=True)
class LearnerConfig:
    n_theta: int = 1000
    mass_threshold: float = 1e-4
    inference: str = "direct"  # "direct" | "network" (network path kept for cross-checks)
    fit_tol: float = 1e-6  # refits warm-start at the prior, so a looser tol suffices
    fit_max_iter: int = 200


@dataclass
class LearnerState:
    """Single-writer per episode: current model posterior, belief and counters."""

    domain: DomainSpec
    model: TransitionModel
    belief: BeliefState
    config: LearnerConfig = field(default_factory=LearnerConfig)
    degenerate_updates: int = 0

    def reset_belief(self, belief: BeliefState | None = None) -> None:
        self.belief = belief if belief is not None else self.domain.uniform_belief()


def observation_likelihood(user_acts: tuple[str, ...], obs: NBestList) -> np.ndarray:
    """P(o | next act) per act: listed entries keep their confidence, the
    residual mass is split uniformly over unlisted acts; an empty list is flat."""
    k = len(user_acts)
    if not obs:
        return np.full(k, 1.0 / k)
    like = np.zeros(k)
    listed = 0.0
    for act, p in obs.entries:
        if act not in user_acts:
            raise ValueError(f"N-best entry {act!r} is not a known user act")
        like[user_acts.index(act)] = p
        listed += p
    unlisted = like == 0.0
    n_unlisted = int(unlisted.sum())
    if n_unlisted:
        like[unlisted] = max(0.0, 1.0 - listed) / n_unlisted
    return like


def _posterior_direct(
    domain: DomainSpec, model: TransitionModel, belief: BeliefState, action_label: str, like: np.ndarray
) -> np.ndarray:
    goal = model.goal_table(action_label)
    act = model.act_table(action_label)
    pred = np.einsum("cij,ic->jc", goal, belief.probs)
    post = pred * (act @ like)[:, None]
    shift = domain.context_shift(action_label)
    if shift is not None:
        shifted = np.zeros_like(post)
        np.add.at(shifted.T, shift, post.T)
        post = shifted
    return post


def _posterior_via_network(
    domain: DomainSpec, model: TransitionModel, belief: BeliefState, action_label: str, like: np.ndarray
) -> np.ndarray:
    net = instantiate(model, belief, action_label)
    net = apply_evidence(net, {"act_next": like})
    dist = query_marginal(net, ["intention_next", "context"], method="exact")
    post = np.array(dist.probs).reshape(len(domain.intentions), len(domain.contexts))
    shift = domain.context_shift(action_label)
    if shift is not None:
        shifted = np.zeros_like(post)
        np.add.at(shifted.T, shift, post.T)
        post = shifted
    return post


def belief_update(ls: LearnerState, action_label: str, obs: NBestList) -> BeliefState:
    """Filtered belief over (next intention, context) after acting and observing."""
    like = observation_likelihood(ls.domain.user_acts, obs)
    if ls.config.inference == "network":
        post = _posterior_via_network(ls.domain, ls.model, ls.belief, action_label, like)
    else:
        post = _posterior_direct(ls.domain, ls.model, ls.belief, action_label, like)
    total = post.sum()
    if total <= 0:
        raise ZeroProbabilityEvidenceError("observation has zero likelihood under the model")
    return ls.belief.with_probs(post)


# ---------------------------------------------------------------------------
# parameter posterior update
# ---------------------------------------------------------------------------


def _refit(
    params: DirichletParams, thetas: np.ndarray, weights: np.ndarray, config: LearnerConfig
) -> DirichletParams | None:
    weights = np.clip(weights, 0.0, None)
    if not np.all(np.isfinite(weights)) or weights.max() <= 0:
        return None
    try:
        new = fit(thetas, weights, labels=params.labels, tol=config.fit_tol,
                  max_iter=config.fit_max_iter, init=params.alphas)
    except DegenerateSamplesError:
        return None
    return DirichletParams(params.labels, np.maximum(new.alphas, ALPHA_FLOOR))


def _multinomial_updates(
    domain: DomainSpec,
    model: MultinomialModel,
    belief: BeliefState,
    action_label: str,
    po: np.ndarray,
    config: LearnerConfig,
    rng: np.random.Generator,
) -> tuple[dict, int]:
    updates: dict = {}
    degenerate = 0
    pred = np.einsum("cij,ic->jc", model.goal_table(action_label), belief.probs)
    pred_i = pred.sum(axis=1)
    act = model.act_table(action_label)
    v = act @ po  # observation likelihood of each next intention
    base_total = float(pred_i @ v)

    act_groups: dict = {}
    for i_idx, key in enumerate(model.act_cells_for(action_label)):
        act_groups.setdefault(key, []).append(i_idx)
    for key, rows in act_groups.items():
        mass = float(pred_i[rows].sum())
        if mass <= config.mass_threshold:
            continue
        params = model.act_params[key]
        c0 = base_total - mass * float(act[rows[0]] @ po)
        thetas = rng.dirichlet(params.alphas, config.n_theta)
        weights = c0 + mass * (thetas @ po)
        new = _refit(params, thetas, weights, config)
        if new is None:
            degenerate += 1
        else:
            updates[key] = new

    goal = model.goal_table(action_label)
    goal_groups: dict = {}
    for c_idx, row in enumerate(model.goal_cells_for(action_label)):
        for i_idx, key in enumerate(row):
            if key is not None:
                goal_groups.setdefault(key, []).append((c_idx, i_idx))
    for key, members in goal_groups.items():
        mass = float(sum(belief.probs[i_idx, c_idx] for c_idx, i_idx in members))
        if mass <= config.mass_threshold:
            continue
        params = model.goal_params[key]
        mean_row = params.alphas / params.alphas.sum()
        c0 = base_total - mass * float(mean_row @ v)
        thetas = rng.dirichlet(params.alphas, config.n_theta)
        weights = c0 + mass * (thetas @ v)
        new = _refit(params, thetas, weights, config)
        if new is None:
            degenerate += 1
        else:
            updates[key] = new
    return updates, degenerate


def _rule_updates(
    domain: DomainSpec,
    model: RuleModel,
    belief: BeliefState,
    action_label: str,
    po: np.ndarray,
    config: LearnerConfig,
    rng: np.random.Generator,
) -> tuple[dict, int]:
    updates: dict = {}
    degenerate = 0
    goal = model.goal_table(action_label)
    act = model.act_table(action_label)
    pred = np.einsum("cij,ic->jc", goal, belief.probs)
    pred_i = pred.sum(axis=1)
    v = act @ po
    base_total = float(pred_i @ v)

    for param, rows in model.act_param_rows(action_label).items():
        mass = float(pred_i[rows].sum())
        if mass <= config.mass_threshold:
            continue
        params = model.params[param]
        thetas = rng.dirichlet(params.alphas, config.n_theta)
        rows_sub = model.rows_with_substituted(action_label, param, thetas, rows, output="act")
        c0 = base_total - float(sum(pred_i[r] * (act[r] @ po) for r in rows))
        weights = c0 + np.einsum("nrk,k,r->n", rows_sub, po, pred_i[rows])
        new = _refit(params, thetas, weights, config)
        if new is None:
            degenerate += 1
        else:
            updates[param] = new

    for param, members in model.goal_param_rows(action_label).items():
        masses = np.array([belief.probs[i_idx, c_idx] for c_idx, i_idx in members])
        if float(masses.sum()) <= config.mass_threshold:
            continue
        params = model.params[param]
        thetas = rng.dirichlet(params.alphas, config.n_theta)
        rows_sub = model.rows_with_substituted(action_label, param, thetas, members, output="goal")
        c0 = base_total - float(
            sum(belief.probs[i, c] * (goal[c, i] @ v) for c, i in members)
        )
        weights = c0 + np.einsum("nrj,j,r->n", rows_sub, v, masses)
        new = _refit(params, thetas, weights, config)
        if new is None:
            degenerate += 1
        else:
            updates[param] = new
    return updates, degenerate


def parameter_update(
    ls: LearnerState, action_label: str, obs: NBestList, rng: np.random.Generator
) -> TransitionModel:
    """Posterior update of every Dirichlet entry whose conditioning assignment
    carries belief mass above the configured threshold. Degenerate weight sets
    keep their prior and bump the learner's warning counter."""
    if ls.config.n_theta <= 0:
        return ls.model
    po = observation_likelihood(ls.domain.user_acts, obs)
    if np.ptp(po) < 1e-12:
        return ls.model  # flat likelihood carries no evidence
    args = (ls.domain, ls.model, ls.belief, action_label, po, ls.config, rng)
    if isinstance(ls.model, MultinomialModel):
        updates, degenerate = _multinomial_updates(*args)
    else:
        updates, degenerate = _rule_updates(*args)
    ls.degenerate_updates += degenerate
    if not updates:
        return ls.model
    return ls.model.with_updated(updates)


def learner_step(
    ls: LearnerState, action_label: str, obs: NBestList, rng: np.random.Generator
) -> LearnerState:
    """One turn of learning: parameter update from the pre-update belief, then the
    belief filter. A zero-likelihood observation falls back to prediction only."""
    model = parameter_update(ls, action_label, obs, rng)
    try:
        belief = belief_update(ls, action_label, obs)
    except ZeroProbabilityEvidenceError:
        belief = belief_update(ls, action_label, NBestList(()))
    ls.model = model
    ls.belief = belief
    return ls
