"""Online depth-limited forward planning over belief states.

The recursion mirrors the standard belief-space expectimax: immediate
expected reward, then for each retained observation branch the updated belief
and the best continuation value, discounted and weighted by the branch
probability. The planner works against a view object so the same recursion
serves both the factored dialogue engine and flat tabular benchmarks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any, Protocol, Sequence

import numpy as np

from .beliefs import BeliefState
from .distributions import Distribution
from .domain import DomainSpec, NBestList, reward_matrix
from .models import TransitionModel


@dataclass(frozen=True)
class PlanConfig:
    horizon: int = 2
    gamma: float = 0.95
    obs_top_k: int = 4
    deadline_s: float | None = None
    planner_noise: float = 0.1
    theta_sampling: bool = False

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.obs_top_k < 1:
            raise ValueError("obs_top_k must be >= 1")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")


@dataclass(frozen=True)
class ObsBranch:
    """One retained observation branch: its probability and an opaque payload
    the view knows how to fold into the predicted belief."""

    label: Any
    prob: float
    payload: Any


class BeliefMdpView(Protocol):
    def actions(self) -> Sequence: ...

    def reward(self, belief, action) -> float: ...

    def predict(self, belief, action): ...

    def observations(self, belief_pred, action, k: int) -> list[ObsBranch]: ...

    def update(self, belief_pred, action, branch: ObsBranch): ...


@dataclass(frozen=True)
class PlanResult:
    action: Any
    q_values: tuple[float, ...]
    truncated: bool


def q_value(view: BeliefMdpView, belief, action, h: int, cfg: PlanConfig) -> float:
    """Expected cumulative reward of `action` with lookahead depth h."""
    if h < 1:
        raise ValueError("depth must be >= 1")
    q = view.reward(belief, action)
    if h > 1 and cfg.gamma > 0.0:
        b_pred = view.predict(belief, action)
        leaf = h == 2 and hasattr(view, "best_leaf_value")
        for branch in view.observations(b_pred, action, cfg.obs_top_k):
            if branch.prob <= 0.0:
                continue
            b_next = view.update(b_pred, action, branch)
            if b_next is None:
                continue
            if leaf:
                best = view.best_leaf_value(b_next)
            else:
                best = max(q_value(view, b_next, a, h - 1, cfg) for a in view.actions())
            q += cfg.gamma * branch.prob * best
    return q


def plan(view: BeliefMdpView, belief, cfg: PlanConfig) -> PlanResult:
    """Evaluate every action at the configured horizon; ties break toward the
    earlier-declared action. With a deadline, at least the first action is
    finished and the deepest completed estimates are returned."""
    started = time.monotonic()
    actions = list(view.actions())
    if not actions:
        raise ValueError("no actions available")
    qs: list[float] = []
    truncated = False
    for idx, action in enumerate(actions):
        if (
            cfg.deadline_s is not None
            and idx > 0
            and time.monotonic() - started > cfg.deadline_s
        ):
            truncated = True
            # unevaluated actions fall back to their immediate expected reward
            qs.extend(view.reward(belief, a) for a in actions[idx:])
            break
        qs.append(q_value(view, belief, action, cfg.horizon, cfg))
    best_idx = 0
    for i in range(1, len(qs)):
        if qs[i] > qs[best_idx]:
            best_idx = i
    return PlanResult(actions[best_idx], tuple(qs), truncated)


def select_action(view: BeliefMdpView, belief, cfg: PlanConfig):
    return plan(view, belief, cfg).action


# ---------------------------------------------------------------------------
# dialogue engine view
# ---------------------------------------------------------------------------


class DialoguePlannerView:
    """Belief-MDP view of a dialogue domain under a transition-model snapshot.

    Observation branching uses canonical point-mass N-best lists (one per user
    act, plus the empty no-recognition list) under an act-confusion noise
    model: the true act is observed with probability 1 - noise, nothing with
    noise/2, and a uniformly wrong act otherwise. Retained branches are
    renormalized. Algorithm note: observation-updated beliefs are normalized.
    """

    def __init__(
        self,
        domain: DomainSpec,
        model: TransitionModel,
        cfg: PlanConfig,
        rng: np.random.Generator | None = None,
        rewards: np.ndarray | None = None,
    ):
        self.domain = domain
        self.model = model
        self._actions = domain.action_labels
        self._action_idx = {a: i for i, a in enumerate(self._actions)}
        self._rewards = rewards if rewards is not None else reward_matrix(domain)
        if cfg.theta_sampling and rng is None:
            raise ValueError("theta sampling requires an rng")
        self._values = model.sampled_values(rng) if cfg.theta_sampling else None
        k = len(domain.user_acts)
        noise = cfg.planner_noise
        # rows: one canonical observation per act, then the empty observation
        confusion = np.full((k + 1, k), (noise / 2.0) / (k - 1) if k > 1 else 0.0)
        np.fill_diagonal(confusion, 1.0 - noise)
        confusion[k, :] = noise / 2.0
        if k == 1:
            confusion[0, 0] = 1.0 - noise / 2.0
        self._confusion = confusion
        self._branch_labels = tuple(
            NBestList(((act, 1.0),)) for act in domain.user_acts
        ) + (NBestList(()),)
        # leaf rewards flattened to one matrix: column per action, row per (intention, context)
        self._leaf = self._rewards.reshape(len(self._actions), -1).T

    @staticmethod
    def _probs(belief) -> np.ndarray:
        return belief.probs if isinstance(belief, BeliefState) else belief

    def actions(self) -> Sequence[str]:
        return self._actions

    def reward(self, belief, action: str) -> float:
        return float(np.sum(self._rewards[self._action_idx[action]] * self._probs(belief)))

    def best_leaf_value(self, belief) -> float:
        """max over actions of the immediate expected reward (depth-1 continuation)."""
        return float((self._probs(belief).reshape(-1) @ self._leaf).max())

    def predict(self, belief, action: str) -> np.ndarray:
        goal = self.model.goal_table(action, self._values)
        pred = np.einsum("cij,ic->jc", goal, self._probs(belief))
        shift = self.domain.context_shift(action)
        if shift is not None:
            shifted = np.zeros_like(pred)
            np.add.at(shifted.T, shift, pred.T)
            pred = shifted
        return pred / pred.sum()

    def act_distribution(self, belief_pred, action: str) -> np.ndarray:
        act = self.model.act_table(action, self._values)
        return act.T @ self._probs(belief_pred).sum(axis=1)

    def observations(self, belief_pred, action: str, k: int) -> list[ObsBranch]:
        probs = self._confusion @ self.act_distribution(belief_pred, action)
        order = np.argsort(-probs, kind="stable")[: min(k, len(probs))]
        total = probs[order].sum()
        if total <= 0:
            return []
        return [
            ObsBranch(self._branch_labels[i], float(probs[i] / total), self._confusion[i])
            for i in order
        ]

    def update(self, belief_pred, action: str, branch: ObsBranch) -> np.ndarray | None:
        act = self.model.act_table(action, self._values)
        like = act @ branch.payload
        post = self._probs(belief_pred) * like[:, None]
        total = post.sum()
        if total <= 0:
            return None
        return post / total

    def top_k_observations(self, belief_pred, k: int, action: str) -> list[tuple[NBestList, float]]:
        return [(b.label, b.prob) for b in self.observations(belief_pred, action, k)]


def top_k_observations(
    belief_pred: BeliefState, k: int, view: DialoguePlannerView, action: str
) -> list[tuple[NBestList, float]]:
    """The k most probable canonical observations, renormalized over the kept set."""
    return view.top_k_observations(belief_pred, k, action)
