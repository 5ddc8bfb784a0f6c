"""Categorical distributions over small labelled supports."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import SupportMismatchError

NORM_TOL = 1e-9


def _as_prob_array(values: Iterable[float]) -> np.ndarray:
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Distribution:
    """Probability distribution over an ordered, duplicate-free support."""

    support: tuple
    probs: np.ndarray

    def __post_init__(self) -> None:
        support = tuple(self.support)
        probs = _as_prob_array(self.probs)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        if len(support) != len(probs):
            raise ValueError("support and probs have different lengths")
        if len(set(support)) != len(support):
            raise ValueError("support contains duplicates")
        if len(probs) == 0:
            raise ValueError("empty support")
        if np.any(probs < -NORM_TOL):
            raise ValueError("negative probability")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {total}, not 1")
        if abs(total - 1.0) > NORM_TOL or np.any(probs < 0):
            # renormalize tiny drift so downstream sums stay within 1e-9
            fixed = np.clip(probs, 0.0, None)
            fixed = fixed / fixed.sum()
            fixed.setflags(write=False)
            object.__setattr__(self, "probs", fixed)

    @classmethod
    def from_weights(cls, support: Sequence, weights: Iterable[float]) -> "Distribution":
        w = np.asarray(list(weights) if not isinstance(weights, np.ndarray) else weights, dtype=float)
        total = w.sum()
        if total <= 0 or not np.isfinite(total):
            raise ValueError("weights must have a positive, finite sum")
        return cls(tuple(support), w / total)

    @classmethod
    def from_mapping(cls, mapping: Mapping[Any, float]) -> "Distribution":
        items = list(mapping.items())
        return cls(tuple(k for k, _ in items), np.array([v for _, v in items], dtype=float))

    @classmethod
    def point_mass(cls, support: Sequence, value: Any) -> "Distribution":
        support = tuple(support)
        probs = np.zeros(len(support))
        probs[support.index(value)] = 1.0
        return cls(support, probs)

    @classmethod
    def uniform(cls, support: Sequence) -> "Distribution":
        support = tuple(support)
        return cls(support, np.full(len(support), 1.0 / len(support)))

    def prob(self, label: Any) -> float:
        return float(self.probs[self.support.index(label)])

    def sample(self, rng: np.random.Generator) -> Any:
        idx = int(rng.choice(len(self.support), p=self.probs / self.probs.sum()))
        return self.support[idx]

    def as_dict(self) -> dict:
        return {label: float(p) for label, p in zip(self.support, self.probs)}

    def align_to(self, support: Sequence) -> "Distribution":
        """Reorder onto `support`; labels outside self's support get probability 0."""
        support = tuple(support)
        if set(self.support) - set(support):
            raise SupportMismatchError("target support misses labels carried by this distribution")
        index = {label: i for i, label in enumerate(self.support)}
        probs = np.array([self.probs[index[s]] if s in index else 0.0 for s in support])
        return Distribution(support, probs)

    def mix(self, other: "Distribution", weight: float) -> "Distribution":
        if self.support != other.support:
            raise SupportMismatchError("cannot mix distributions over different supports")
        return Distribution(self.support, weight * self.probs + (1.0 - weight) * other.probs)

    def total_variation(self, other: "Distribution") -> float:
        if self.support != other.support:
            raise SupportMismatchError("cannot compare distributions over different supports")
        return float(0.5 * np.abs(self.probs - other.probs).sum())
