"""Flat tabular POMDPs and their planner view, mostly for oracles and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .planner import ObsBranch


@dataclass(frozen=True)
class TabularPomdp:
    """Explicit ⟨S, A, O⟩ matrices: transitions T[a, s, s'], observations
    Z[a, s', o] (emitted after landing in s'), rewards R[s, a]."""

    transitions: np.ndarray
    observations: np.ndarray
    rewards: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.transitions, dtype=float)
        z = np.asarray(self.observations, dtype=float)
        r = np.asarray(self.rewards, dtype=float)
        n_a, n_s, n_s2 = t.shape
        if n_s != n_s2 or z.shape[:2] != (n_a, n_s) or r.shape != (n_s, n_a):
            raise ValueError("inconsistent POMDP matrix shapes")
        if np.any(np.abs(t.sum(axis=2) - 1.0) > 1e-9) or np.any(np.abs(z.sum(axis=2) - 1.0) > 1e-9):
            raise ValueError("transition/observation rows must sum to 1")
        object.__setattr__(self, "transitions", t)
        object.__setattr__(self, "observations", z)
        object.__setattr__(self, "rewards", r)

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]

    @property
    def n_obs(self) -> int:
        return self.observations.shape[2]

    @classmethod
    def random(cls, rng: np.random.Generator, n_states: int, n_actions: int, n_obs: int,
               reward_range: tuple[float, float] = (-5.0, 5.0)) -> "TabularPomdp":
        t = rng.dirichlet(np.ones(n_states), size=(n_actions, n_states))
        z = rng.dirichlet(np.ones(n_obs), size=(n_actions, n_states))
        lo, hi = reward_range
        r = rng.uniform(lo, hi, size=(n_states, n_actions))
        return cls(t, z, r)


class TabularView:
    """Planner view over a flat POMDP; beliefs are plain probability vectors."""

    def __init__(self, pomdp: TabularPomdp):
        self.pomdp = pomdp

    def actions(self):
        return range(self.pomdp.n_actions)

    def reward(self, belief: np.ndarray, action: int) -> float:
        return float(belief @ self.pomdp.rewards[:, action])

    def best_leaf_value(self, belief: np.ndarray) -> float:
        return float((belief @ self.pomdp.rewards).max())

    def predict(self, belief: np.ndarray, action: int) -> np.ndarray:
        return self.pomdp.transitions[action].T @ belief

    def observations(self, belief_pred: np.ndarray, action: int, k: int) -> list[ObsBranch]:
        probs = self.pomdp.observations[action].T @ belief_pred
        order = np.argsort(-probs, kind="stable")[: min(k, len(probs))]
        total = probs[order].sum()
        if total <= 0:
            return []
        return [ObsBranch(int(o), float(probs[o] / total), int(o)) for o in order]

    def update(self, belief_pred: np.ndarray, action: int, branch: ObsBranch) -> np.ndarray | None:
        post = belief_pred * self.pomdp.observations[action][:, branch.payload]
        total = post.sum()
        if total <= 0:
            return None
        return post / total
