"""Belief state over the hidden dialogue variables: intention and context.

The last user act is integrated out after every turn, so the stored belief is
a joint over (intention, context assignment), kept as a dense matrix. Context
assignments are full value tuples in declared variable order; domains without
context variables carry the single empty assignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bayesnet import Cpt, Network, Variable
from .distributions import Distribution

BELIEF_TOL = 1e-9


@dataclass(frozen=True)
class BeliefState:
    intentions: tuple[str, ...]
    context_names: tuple[str, ...]
    contexts: tuple[tuple, ...]
    probs: np.ndarray  # shape (len(intentions), len(contexts)), sums to 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "intentions", tuple(self.intentions))
        object.__setattr__(self, "context_names", tuple(self.context_names))
        object.__setattr__(self, "contexts", tuple(tuple(c) for c in self.contexts))
        probs = np.array(self.probs, dtype=float, copy=True)
        if probs.shape != (len(self.intentions), len(self.contexts)):
            raise ValueError("belief matrix shape does not match vocabulary")
        if np.any(probs < -BELIEF_TOL):
            raise ValueError("negative belief mass")
        total = probs.sum()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"belief sums to {total}, not 1")
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(
        cls,
        intentions,
        context_names=(),
        contexts=((),),
        over: tuple[str, ...] | None = None,
    ) -> "BeliefState":
        """Uniform belief; `over` restricts the intention support, contexts stay uniform."""
        intentions = tuple(intentions)
        contexts = tuple(tuple(c) for c in contexts)
        probs = np.zeros((len(intentions), len(contexts)))
        active = tuple(over) if over is not None else intentions
        for i in active:
            probs[intentions.index(i), :] = 1.0
        return cls(intentions, tuple(context_names), contexts, probs / probs.sum())

    @classmethod
    def point_mass(cls, intentions, context_names, contexts, intention, context) -> "BeliefState":
        intentions = tuple(intentions)
        contexts = tuple(tuple(c) for c in contexts)
        probs = np.zeros((len(intentions), len(contexts)))
        probs[intentions.index(intention), contexts.index(tuple(context))] = 1.0
        return cls(intentions, tuple(context_names), contexts, probs)

    @classmethod
    def from_intention_distribution(
        cls, dist: Distribution, context_names, contexts, context
    ) -> "BeliefState":
        contexts = tuple(tuple(c) for c in contexts)
        probs = np.zeros((len(dist.support), len(contexts)))
        probs[:, contexts.index(tuple(context))] = dist.probs
        return cls(tuple(dist.support), tuple(context_names), contexts, probs)

    def intention_marginal(self) -> Distribution:
        return Distribution(self.intentions, self.probs.sum(axis=1))

    def context_marginal(self) -> Distribution:
        return Distribution(self.contexts, self.probs.sum(axis=0))

    def with_probs(self, probs: np.ndarray) -> "BeliefState":
        total = probs.sum()
        if total <= 0:
            raise ValueError("cannot renormalize zero belief mass")
        return BeliefState(self.intentions, self.context_names, self.contexts, probs / total)

    def mix(self, other: "BeliefState", weight: float) -> "BeliefState":
        if self.intentions != other.intentions or self.contexts != other.contexts:
            raise ValueError("belief vocabularies differ")
        return self.with_probs(weight * self.probs + (1.0 - weight) * other.probs)

    def as_network(self) -> Network:
        """Two-node network (context root, intention child) encoding this joint."""
        ctx_marginal = self.probs.sum(axis=0)
        rows = np.empty((len(self.contexts), len(self.intentions)))
        for c in range(len(self.contexts)):
            if ctx_marginal[c] > 0:
                rows[c] = self.probs[:, c] / ctx_marginal[c]
            else:
                rows[c] = 1.0 / len(self.intentions)
        return Network(
            [Variable("context", self.contexts), Variable("intention", self.intentions)],
            [
                Cpt("context", (), ctx_marginal / ctx_marginal.sum()),
                Cpt("intention", ("context",), rows),
            ],
        )
