"""Dirichlet machinery: conjugate updates, sampling, and maximum-likelihood fitting.

The fit follows Minka's scheme: moment-matching initialization, then the
fixed-point iteration psi(a_k) = psi(sum a) + <log p_k> solved with an
inverse-digamma Newton step. Weighted samples are supported so a posterior can
be refit from likelihood-weighted parameter draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import psi

from .distributions import Distribution
from .errors import DegenerateSamplesError

LOG_CLAMP = 1e-10
ALPHA_FLOOR = 1e-8
ALPHA_CAP = 1e12


@dataclass(frozen=True)
class DirichletParams:
    """Pseudo-count vector over labelled categories (all entries positive)."""

    labels: tuple
    alphas: np.ndarray

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        alphas = np.array(self.alphas, dtype=float, copy=True)
        alphas.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "alphas", alphas)
        if len(labels) != len(alphas):
            raise ValueError("labels and alphas have different lengths")
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate labels")
        if len(alphas) == 0 or np.any(alphas <= 0) or not np.all(np.isfinite(alphas)):
            raise ValueError("alphas must be positive and finite")

    @classmethod
    def symmetric(cls, labels: Sequence, alpha: float) -> "DirichletParams":
        labels = tuple(labels)
        return cls(labels, np.full(len(labels), float(alpha)))

    def mean(self) -> Distribution:
        return Distribution(self.labels, self.alphas / self.alphas.sum())

    def updated(self, category, weight: float) -> "DirichletParams":
        """Conjugate pseudo-count increment: alpha[category] += weight."""
        if weight < 0:
            raise ValueError("weight must be nonnegative")
        if category not in self.labels:
            raise KeyError(f"unknown category: {category!r}")
        alphas = np.array(self.alphas)
        alphas[self.labels.index(category)] += weight
        return DirichletParams(self.labels, alphas)

    def sample(self, rng: np.random.Generator) -> Distribution:
        draw = rng.dirichlet(self.alphas)
        # guard against exact-zero components from tiny alphas
        if draw.sum() <= 0 or not np.all(np.isfinite(draw)):
            draw = self.alphas / self.alphas.sum()
        return Distribution(self.labels, draw / draw.sum())

    def sample_array(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.dirichlet(self.alphas, size=n)


def _trigamma(x: np.ndarray) -> np.ndarray:
    """psi'(x) for positive x: shift the argument up by 6, then the asymptotic series."""
    acc = 1.0 / (x * x)
    for j in range(1, 6):
        xj = x + float(j)
        acc = acc + 1.0 / (xj * xj)
    z = x + 6.0
    inv = 1.0 / z
    inv2 = inv * inv
    series = inv * (
        1.0 + inv * (0.5 + inv * (1.0 / 6.0 + inv2 * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 - inv2 / 30.0))))
    )
    return acc + series


def _inverse_digamma(y: np.ndarray, newton_steps: int = 4) -> np.ndarray:
    # Minka's initialization, then a few Newton steps on psi(x) = y.
    x = np.where(y >= -2.22, np.exp(y) + 0.5, -1.0 / (y - psi(1.0)))
    x = np.maximum(x, 1e-12)
    for _ in range(newton_steps):
        x = x - (psi(x) - y) / _trigamma(x)
        x = np.maximum(x, 1e-12)
    return x


def _as_sample_matrix(samples) -> tuple[np.ndarray, tuple | None]:
    if isinstance(samples, np.ndarray):
        return np.asarray(samples, dtype=float), None
    rows = list(samples)
    if rows and isinstance(rows[0], Distribution):
        support = rows[0].support
        for d in rows[1:]:
            if d.support != support:
                raise ValueError("samples carry mismatched supports")
        return np.stack([d.probs for d in rows]), support
    return np.asarray(rows, dtype=float), None


def fit(
    samples,
    weights: Iterable[float] | None = None,
    *,
    labels: Sequence | None = None,
    max_iter: int = 1000,
    tol: float = 1e-8,
    init: np.ndarray | None = None,
) -> DirichletParams:
    """Weighted maximum-likelihood Dirichlet fit.

    `samples` is a list of Distributions or an (n, k) array of probability
    vectors; `weights` are nonnegative and not all zero. Initialization is
    moment matching unless an explicit `init` (e.g. the previous posterior) is
    given. Converges when max |delta alpha| < tol or after `max_iter` rounds.
    """
    matrix, derived_labels = _as_sample_matrix(samples)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    n, k = matrix.shape
    if labels is None:
        labels = derived_labels if derived_labels is not None else tuple(range(k))
    labels = tuple(labels)
    if len(labels) != k:
        raise ValueError("labels do not match sample dimension")

    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(list(weights) if not isinstance(weights, np.ndarray) else weights, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be nonnegative, finite, one per sample")
    total_w = w.sum()
    if total_w <= 0:
        raise ValueError("weights must not all be zero")

    active = matrix[w > 0]
    if np.any(active.max(axis=0) < LOG_CLAMP):
        raise DegenerateSamplesError(
            "a component is identically zero across all weighted samples; smooth the inputs"
        )
    if np.any(active.min(axis=0) > 1.0 - LOG_CLAMP):
        raise DegenerateSamplesError(
            "a component is identically one across all weighted samples; smooth the inputs"
        )

    wn = w / total_w
    mean_p = wn @ matrix
    mean_logp = wn @ np.log(np.maximum(matrix, LOG_CLAMP))

    if init is not None:
        alpha = np.minimum(np.maximum(np.asarray(init, dtype=float), ALPHA_FLOOR), ALPHA_CAP)
    else:
        # moment matching for the total concentration (per-component estimates, take the median)
        mean_p2 = wn @ (matrix**2)
        var = mean_p2 - mean_p**2
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (mean_p - mean_p2) / var
        s = s[np.isfinite(s) & (s > 0)]
        a0 = float(np.median(s)) if s.size else 1.0
        a0 = min(max(a0, 1e-3), ALPHA_CAP)
        alpha = np.minimum(np.maximum(a0 * np.maximum(mean_p, 1e-8), ALPHA_FLOOR), ALPHA_CAP)

    newton_steps = 4 if tol < 1e-6 else 2
    for _ in range(max_iter):
        new_alpha = _inverse_digamma(psi(alpha.sum()) + mean_logp, newton_steps)
        new_alpha = np.minimum(np.maximum(new_alpha, ALPHA_FLOOR), ALPHA_CAP)
        delta = np.max(np.abs(new_alpha - alpha))
        alpha = new_alpha
        if delta < tol:
            break
    return DirichletParams(labels, alpha)
