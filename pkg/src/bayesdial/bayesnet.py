"""Discrete Bayesian networks with exact enumeration and likelihood-weighted sampling.

Networks are immutable values. Evidence is carried as likelihood factors:
hard evidence is a one-hot factor, soft evidence an arbitrary nonnegative
weight vector over a variable's values (the N-best semantics of an uncertain
observation). Exact inference enumerates the joint with numpy broadcasting;
approximate inference is likelihood weighting along a topological order.
"""

from __future__ import annotations

import graphlib
import itertools
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .distributions import Distribution
from .errors import EvidenceError, ZeroProbabilityEvidenceError

ROW_TOL = 1e-9
MAX_EXACT_JOINT = 50_000_000


@dataclass(frozen=True)
class Variable:
    name: str
    values: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) == 0:
            raise ValueError(f"variable {self.name} has no values")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"variable {self.name} has duplicate values")


@dataclass(frozen=True)
class Cpt:
    """P(child | parents): table shaped (parent sizes..., child size), rows normalized."""

    child: str
    parents: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "parents", tuple(self.parents))
        table = np.array(self.table, dtype=float, copy=True)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)


class Network:
    """Immutable DAG of finite variables with one CPT per variable."""

    def __init__(
        self,
        variables: Sequence[Variable],
        cpts: Sequence[Cpt],
        likelihoods: Sequence[tuple[str, np.ndarray]] = (),
    ):
        self._vars: dict[str, Variable] = {}
        for v in variables:
            if v.name in self._vars:
                raise ValueError(f"duplicate variable {v.name}")
            self._vars[v.name] = v
        self._order = tuple(self._vars)

        self._cpts: dict[str, Cpt] = {}
        for cpt in cpts:
            if cpt.child not in self._vars:
                raise ValueError(f"CPT for unknown variable {cpt.child}")
            if cpt.child in self._cpts:
                raise ValueError(f"duplicate CPT for {cpt.child}")
            for p in cpt.parents:
                if p not in self._vars:
                    raise ValueError(f"CPT for {cpt.child} references unknown parent {p}")
            expected = tuple(len(self._vars[p].values) for p in cpt.parents) + (
                len(self._vars[cpt.child].values),
            )
            if cpt.table.shape != expected:
                raise ValueError(
                    f"CPT for {cpt.child} has shape {cpt.table.shape}, expected {expected}"
                )
            rows = cpt.table.reshape(-1, expected[-1])
            if np.any(np.abs(rows.sum(axis=1) - 1.0) > ROW_TOL) or np.any(rows < -ROW_TOL):
                raise ValueError(f"CPT for {cpt.child} has rows not summing to 1")
            self._cpts[cpt.child] = cpt
        missing = set(self._vars) - set(self._cpts)
        if missing:
            raise ValueError(f"variables without a CPT: {sorted(missing)}")

        graph = {name: set(self._cpts[name].parents) for name in self._vars}
        try:
            self._topo = tuple(graphlib.TopologicalSorter(graph).static_order())
        except graphlib.CycleError as exc:
            raise ValueError("network is not acyclic") from exc

        self._likelihoods: tuple[tuple[str, np.ndarray], ...] = tuple(
            (name, np.array(vec, dtype=float, copy=True)) for name, vec in likelihoods
        )
        for name, vec in self._likelihoods:
            if name not in self._vars:
                raise EvidenceError(f"likelihood on unknown variable {name}")
            if vec.shape != (len(self._vars[name].values),) or np.any(vec < 0):
                raise EvidenceError(f"bad likelihood vector for {name}")
            vec.setflags(write=False)

    @property
    def variables(self) -> tuple[Variable, ...]:
        return tuple(self._vars[n] for n in self._order)

    def variable(self, name: str) -> Variable:
        if name not in self._vars:
            raise EvidenceError(f"unknown variable {name}")
        return self._vars[name]

    def cpt(self, name: str) -> Cpt:
        return self._cpts[name]

    def joint_size(self) -> int:
        size = 1
        for v in self._vars.values():
            size *= len(v.values)
        return size

    def describe(self) -> str:
        lines = []
        for name in sorted(self._vars):
            v = self._vars[name]
            lines.append(f"var {name}: " + ", ".join(str(x) for x in v.values))
        for name in sorted(self._cpts):
            cpt = self._cpts[name]
            cond = " | " + ", ".join(cpt.parents) if cpt.parents else ""
            lines.append(f"cpt {name}{cond}:")
            rows = cpt.table.reshape(-1, cpt.table.shape[-1])
            parent_values = [self._vars[p].values for p in cpt.parents]
            for assign, row in zip(itertools.product(*parent_values), rows):
                prefix = "(" + ", ".join(str(a) for a in assign) + ") " if assign else ""
                lines.append("  " + prefix + " ".join(f"{x:.6f}" for x in row))
        for name, vec in self._likelihoods:
            lines.append(f"likelihood {name}: " + " ".join(f"{x:.6f}" for x in vec))
        return "\n".join(lines)

    # -- evidence ---------------------------------------------------------

    def _likelihood_vector(self, name: str, spec) -> np.ndarray:
        var = self.variable(name)
        if isinstance(spec, Mapping):
            vec = np.zeros(len(var.values))
            for value, weight in spec.items():
                if value not in var.values:
                    raise EvidenceError(f"unknown value {value!r} for variable {name}")
                if weight < 0:
                    raise EvidenceError("negative evidence weight")
                vec[var.values.index(value)] = float(weight)
            return vec
        if isinstance(spec, (list, tuple, np.ndarray)):
            vec = np.asarray(spec, dtype=float)
            if vec.shape != (len(var.values),) or np.any(vec < 0):
                raise EvidenceError(f"bad likelihood vector for {name}")
            return vec
        if spec not in var.values:
            raise EvidenceError(f"unknown value {spec!r} for variable {name}")
        vec = np.zeros(len(var.values))
        vec[var.values.index(spec)] = 1.0
        return vec

    def with_evidence(self, evidence: Mapping[str, Any]) -> "Network":
        factors = list(self._likelihoods)
        for name, spec in evidence.items():
            factors.append((name, self._likelihood_vector(name, spec)))
        return Network(self.variables, tuple(self._cpts.values()), factors)

    # -- exact inference --------------------------------------------------

    def _joint(self, extra: Sequence[tuple[str, np.ndarray]]) -> np.ndarray:
        if self.joint_size() > MAX_EXACT_JOINT:
            raise ValueError("joint too large for exact enumeration")
        axes = {name: i for i, name in enumerate(self._order)}
        shape = tuple(len(self._vars[n].values) for n in self._order)
        joint = np.ones(shape)
        ndim = len(shape)
        for cpt in self._cpts.values():
            involved = cpt.parents + (cpt.child,)
            # transpose the CPT so its axes follow the joint-lattice order, then
            # view it with singleton axes for all uninvolved variables
            src = np.transpose(cpt.table, _perm(involved, axes))
            newshape = [1] * ndim
            for name in involved:
                newshape[axes[name]] = len(self._vars[name].values)
            joint = joint * src.reshape(newshape)
        for name, vec in tuple(self._likelihoods) + tuple(extra):
            newshape = [1] * ndim
            newshape[axes[name]] = len(vec)
            joint = joint * vec.reshape(newshape)
        return joint

    def exact_marginal(self, query: Sequence[str], evidence: Mapping[str, Any] | None = None) -> Distribution:
        query = [query] if isinstance(query, str) else list(query)
        for q in query:
            self.variable(q)
        extra = []
        for name, spec in (evidence or {}).items():
            extra.append((name, self._likelihood_vector(name, spec)))
        joint = self._joint(extra)
        axes = {name: i for i, name in enumerate(self._order)}
        keep = [axes[q] for q in query]
        drop = tuple(i for i in range(joint.ndim) if i not in keep)
        marg = joint.sum(axis=drop) if drop else joint
        # put query axes into the requested order
        marg = np.transpose(marg, np.argsort(np.argsort([axes[q] for q in query])))
        total = marg.sum()
        if total <= 0:
            raise ZeroProbabilityEvidenceError("evidence has zero probability under the network")
        probs = (marg / total).reshape(-1)
        if len(query) == 1:
            support = self._vars[query[0]].values
        else:
            support = tuple(itertools.product(*(self._vars[q].values for q in query)))
        return Distribution(support, probs)

    # -- likelihood weighting ----------------------------------------------

    def _weighted_samples(
        self, evidence: Mapping[str, Any] | None, n_samples: int, rng: np.random.Generator
    ) -> tuple[dict[str, np.ndarray], np.ndarray]:
        extra = []
        for name, spec in (evidence or {}).items():
            extra.append((name, self._likelihood_vector(name, spec)))
        factors: dict[str, list[np.ndarray]] = {}
        for name, vec in tuple(self._likelihoods) + tuple(extra):
            factors.setdefault(name, []).append(vec)
        # a factor that is one-hot acts as hard evidence: clamp and weight
        hard: dict[str, int] = {}
        for name, vecs in factors.items():
            combined = np.ones_like(vecs[0])
            for v in vecs:
                combined = combined * v
            factors[name] = [combined]
            nonzero = np.nonzero(combined)[0]
            if nonzero.size == 0:
                raise ZeroProbabilityEvidenceError(f"evidence on {name} has zero support")
            if nonzero.size == 1:
                hard[name] = int(nonzero[0])

        samples: dict[str, np.ndarray] = {}
        weights = np.ones(n_samples)
        for name in self._topo:
            cpt = self._cpts[name]
            k = len(self._vars[name].values)
            if cpt.parents:
                idx = tuple(samples[p] for p in cpt.parents)
                rows = cpt.table[idx]
            else:
                rows = np.broadcast_to(cpt.table, (n_samples, k))
            if name in hard:
                value = hard[name]
                samples[name] = np.full(n_samples, value, dtype=int)
                weights = weights * rows[:, value] * factors[name][0][value]
            else:
                cdf = np.cumsum(rows, axis=1)
                u = rng.random(n_samples) * cdf[:, -1]
                drawn = (cdf < u[:, None]).sum(axis=1)
                drawn = np.minimum(drawn, k - 1)
                samples[name] = drawn
                if name in factors:
                    weights = weights * factors[name][0][drawn]
        return samples, weights

    def sampled_marginal(
        self,
        query: Sequence[str],
        evidence: Mapping[str, Any] | None,
        n_samples: int,
        rng: np.random.Generator,
        *,
        with_se: bool = False,
    ):
        query = [query] if isinstance(query, str) else list(query)
        for q in query:
            self.variable(q)
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        samples, weights = self._weighted_samples(evidence, n_samples, rng)
        total = weights.sum()
        if total <= 0:
            raise ZeroProbabilityEvidenceError("all sample weights are zero under the evidence")
        sizes = [len(self._vars[q].values) for q in query]
        flat = np.zeros(n_samples, dtype=int)
        for q, size in zip(query, sizes):
            flat = flat * size + samples[q]
        k = int(np.prod(sizes))
        probs = np.bincount(flat, weights=weights, minlength=k) / total
        if len(query) == 1:
            support = self._vars[query[0]].values
        else:
            support = tuple(itertools.product(*(self._vars[q].values for q in query)))
        dist = Distribution(support, probs)
        if not with_se:
            return dist
        # weighted-sample standard error per component
        se = np.empty(k)
        wn = weights / total
        for j in range(k):
            indicator = (flat == j).astype(float)
            se[j] = np.sqrt(np.sum((wn * (indicator - probs[j])) ** 2))
        return dist, se


def _perm(involved: tuple[str, ...], axes: Mapping[str, int]) -> tuple[int, ...]:
    """Permutation taking CPT axes (parents..., child) into joint-lattice order."""
    order = sorted(range(len(involved)), key=lambda k: axes[involved[k]])
    return tuple(order)


def query_marginal(
    net: Network,
    query: Sequence[str] | str,
    evidence: Mapping[str, Any] | None = None,
    method: str = "exact",
    n_samples: int = 10_000,
    rng: np.random.Generator | None = None,
) -> Distribution:
    """Marginal (joint over `query` variables) under optional hard/soft evidence.

    Exact mode enumerates; sampling mode is likelihood weighting and needs an
    explicit rng for reproducibility.
    """
    if method == "exact":
        return net.exact_marginal(query, evidence)
    if method == "sampling":
        if rng is None:
            raise ValueError("sampling inference requires an explicit rng")
        return net.sampled_marginal(query, evidence, n_samples, rng)
    raise ValueError(f"unknown inference method: {method}")


def apply_evidence(net: Network, evidence: Mapping[str, Any]) -> Network:
    """Fold evidence into the network as likelihood factors (hard values become one-hot)."""
    return net.with_evidence(evidence)
