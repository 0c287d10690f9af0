"""Exact inference over fully discrete diagrams.

Probability factors are numpy arrays with named axes. Queries prune variables
that cannot influence the answer (non-ancestors of targets and evidence),
apply evidence by slicing, then run variable elimination in min-fill order
with lexicographic tie-breaks so results are reproducible across runs.

Utility nodes never enter the probability factors: a utility is a
deterministic number per parent configuration, so its expectation is the sum
of posterior parent-configuration probabilities times values. Declared
aggregate utilities are expectations summed over their components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import exprlang
from . import model as M
from .errors import ImpossibleEvidenceError, QueryError


@dataclass(frozen=True)
class Factor:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.names) != self.values.ndim:
            raise QueryError(f"factor axes {self.names} do not match array of rank {self.values.ndim}")

    def align(self, names: tuple[str, ...]) -> np.ndarray:
        missing = tuple(n for n in names if n not in self.names)
        arr = self.values.reshape(self.values.shape + (1,) * len(missing))
        current = self.names + missing
        return arr.transpose([current.index(n) for n in names])

    def product(self, other: "Factor") -> "Factor":
        names = self.names + tuple(n for n in other.names if n not in self.names)
        return Factor(names, self.align(names) * other.align(names))

    def marginalize(self, name: str) -> "Factor":
        axis = self.names.index(name)
        return Factor(self.names[:axis] + self.names[axis + 1 :], self.values.sum(axis=axis))

    def reduce(self, name: str, index: int) -> "Factor":
        axis = self.names.index(name)
        return Factor(self.names[:axis] + self.names[axis + 1 :], self.values.take(index, axis=axis))

    def transpose(self, names: tuple[str, ...]) -> "Factor":
        if set(names) != set(self.names):
            raise QueryError(f"cannot reorder {self.names} as {names}")
        return Factor(names, self.values.transpose([self.names.index(n) for n in names]))

    @property
    def total(self) -> float:
        return float(self.values.sum())


def multiply_all(factors) -> Factor:
    out = Factor((), np.array(1.0))
    for f in factors:
        out = out.product(f)
    return out


def eliminate(factors: list[Factor], drop: set[str]) -> list[Factor]:
    """Sum the given variables out of the factor set, min-fill order with
    lexicographic tie-breaks."""
    factors = [f for f in factors]
    remaining = set(drop)
    neighbors: dict[str, set[str]] = {}
    for f in factors:
        for n in f.names:
            neighbors.setdefault(n, set()).update(x for x in f.names if x != n)

    def fill_cost(v: str) -> int:
        around = [u for u in neighbors.get(v, ()) if u in neighbors]
        return sum(1 for i, a in enumerate(around) for b in around[i + 1 :] if b not in neighbors[a])

    while remaining:
        v = min(remaining, key=lambda n: (fill_cost(n), n))
        remaining.remove(v)
        touching = [f for f in factors if v in f.names]
        factors = [f for f in factors if v not in f.names]
        if touching:
            factors.append(multiply_all(touching).marginalize(v))
        around = [u for u in neighbors.pop(v, ()) if u in neighbors]
        for a in around:
            neighbors[a].discard(v)
            neighbors[a].update(u for u in around if u != a)
    return factors


class CompiledNet:
    """Factor tables and utility evaluators for one discrete diagram.

    Build once per diagram version; queries then share the arrays across many
    evidence configurations.
    """

    def __init__(self, diagram: M.InfluenceDiagram):
        self.diagram = diagram
        self.tables: dict[str, Factor] = {}
        self._utility_values: dict[str, np.ndarray] = {}
        for v in diagram.variables:
            if v.kind == M.UTILITY:
                continue
            if not isinstance(v.domain, M.DiscreteDomain):
                raise QueryError(f"{v.name} is continuous; discretize before querying")
            if not isinstance(v.cpd, M.TableCpd):
                raise QueryError(f"{v.name} has no table; discretize before querying")
            parents = diagram.cpd_parents(v.name)
            shape = tuple(self._card(p) for p in parents) + (v.domain.size,)
            self.tables[v.name] = Factor(parents + (v.name,), np.asarray(v.cpd.values).reshape(shape))

    def _card(self, name: str) -> int:
        domain = self.diagram.variable(name).domain
        if not isinstance(domain, M.DiscreteDomain):
            raise QueryError(f"{name} is continuous; discretize before querying")
        return domain.size

    def _index(self, name: str, label: str) -> int:
        domain = self.diagram.variable(name).domain
        assert isinstance(domain, M.DiscreteDomain)
        return domain.index(label)

    def _ancestral(self, names) -> set[str]:
        out: set[str] = set()
        frontier = [n for n in names]
        while frontier:
            n = frontier.pop()
            if n in out:
                continue
            out.add(n)
            frontier.extend(self.diagram.cpd_parents(n))
        return out

    def posterior_joint(self, targets: tuple[str, ...], evidence: dict[str, str]) -> Factor:
        """Normalized joint over the targets given evidence, axes in target order.

        Targets that are themselves evidence come back as point-mass axes.
        """
        for name in targets:
            self.diagram.variable(name)
        bound = {n: self._index(n, lbl) for n, lbl in evidence.items()}
        free = tuple(t for t in targets if t not in bound)
        relevant = self._ancestral(set(free) | set(bound))
        factors = []
        for name in sorted(relevant):
            if name not in self.tables:
                raise QueryError(f"{name} is not a probability variable")
            f = self.tables[name]
            for ev, idx in bound.items():
                if ev in f.names:
                    f = f.reduce(ev, idx)
            factors.append(f)
        kept = eliminate(factors, {n for f in factors for n in f.names} - set(free))
        joint = multiply_all(kept)
        z = joint.total
        if z <= 0.0 or math.isnan(z):
            raise ImpossibleEvidenceError(f"evidence {evidence} has probability zero")
        joint = Factor(joint.names, joint.values / z)
        if free:
            joint = joint.transpose(tuple(t for t in targets if t in free))
        for t in targets:
            if t in bound:
                axis_values = np.zeros(self._card(t))
                axis_values[bound[t]] = 1.0
                joint = joint.product(Factor((t,), axis_values))
        return joint.transpose(targets) if targets else joint

    def posterior_marginal(self, target: str, evidence: dict[str, str]) -> dict[str, float]:
        joint = self.posterior_joint((target,), evidence)
        domain = self.diagram.variable(target).domain
        assert isinstance(domain, M.DiscreteDomain)
        return {label: float(p) for label, p in zip(domain.labels, joint.values)}

    def probability(self, evidence: dict[str, str]) -> float:
        """Marginal probability of the evidence configuration."""
        bound = {n: self._index(n, lbl) for n, lbl in evidence.items()}
        relevant = self._ancestral(set(bound))
        factors = []
        for name in sorted(relevant):
            f = self.tables[name]
            for ev, idx in bound.items():
                if ev in f.names:
                    f = f.reduce(ev, idx)
            factors.append(f)
        kept = eliminate(factors, {n for f in factors for n in f.names})
        return multiply_all(kept).total

    def utility_values(self, name: str) -> np.ndarray:
        """Deterministic utility value per parent configuration."""
        if name in self._utility_values:
            return self._utility_values[name]
        v = self.diagram.variable(name)
        if v.kind != M.UTILITY:
            raise QueryError(f"{name} is not a utility variable")
        parents = v.parents
        shape = tuple(self._card(p) for p in parents)
        if isinstance(v.cpd, M.TableCpd):
            values = np.asarray(v.cpd.values, dtype=float).reshape(shape)
        elif isinstance(v.cpd, M.ExpressionCpd):
            expr = v.cpd.expr
            domains = [self.diagram.variable(p).domain for p in parents]
            flat = np.empty(int(np.prod(shape)) if shape else 1, dtype=float)
            for i, combo in enumerate(_config_product(domains)):
                env = {p: d.binding(s) for p, d, s in zip(parents, domains, combo)}
                spec = exprlang.evaluate_distribution(expr, env)
                if spec.family != "point":
                    raise QueryError(f"utility {name} is not deterministic at {combo}")
                flat[i] = spec.params[0]
            values = flat.reshape(shape)
        else:
            raise QueryError(f"utility {name} has no table or expression")
        self._utility_values[name] = values
        return values

    def expected_utility(self, name: str, evidence: dict[str, str]) -> float:
        """Posterior expectation of a utility node or declared aggregate."""
        components = self.diagram.aggregate_components(name)
        if components is not None:
            return sum(self.expected_utility(c, evidence) for c in components)
        v = self.diagram.variable(name)
        if v.kind != M.UTILITY:
            raise QueryError(f"{name} is not a utility variable")
        values = self.utility_values(name)
        joint = self.posterior_joint(tuple(v.parents), evidence)
        return float((joint.values * values).sum())


def posterior_marginal(diagram: M.InfluenceDiagram, target: str, evidence: dict[str, str] | None = None):
    return CompiledNet(diagram).posterior_marginal(target, dict(evidence or {}))


def expected_utility(diagram: M.InfluenceDiagram, utility: str, evidence: dict[str, str] | None = None) -> float:
    return CompiledNet(diagram).expected_utility(utility, dict(evidence or {}))


def _config_product(domains):
    import itertools

    return itertools.product(*[d.labels for d in domains])
