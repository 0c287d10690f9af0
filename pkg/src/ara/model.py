"""Influence-diagram model types and structural operations.

A diagram is an immutable collection of variables (decision, chance, utility)
plus an explicit stage order over the decisions. Chance and utility nodes have
probabilistic parents; decision nodes instead list informational parents (what
the owner knows when deciding), which double as the conditioning parents of
their policy tables. All mutating operations return new diagrams.

Construction conventions enforced here, following the sequential
defend-attack pattern:

  * decisions alternate between the two owners along the stage order
    (violations are warnings so asymmetric games remain loadable);
  * every decision should be informed by all earlier decisions (warning when
    arcs were removed, e.g. by session surgery after a partial observation);
  * decisions are discrete (error);
  * decision tables start uniform, reflecting an open-minded prior over what
    an agent will do before the game is solved.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

from . import exprlang
from .errors import ModelError

DEFENDER = "defender"
ATTACKER = "attacker"
OWNERS = (DEFENDER, ATTACKER)

DECISION = "decision"
CHANCE = "chance"
UTILITY = "utility"


# -- domains -------------------------------------------------------------------


@dataclass(frozen=True)
class StateDef:
    label: str
    value: float | None = None


@dataclass(frozen=True)
class DiscreteDomain:
    states: tuple[StateDef, ...]

    @cached_property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.states)

    @property
    def size(self) -> int:
        return len(self.states)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ModelError(f"unknown state {label!r}; states are {list(self.labels)}") from None

    def value_of(self, label: str) -> float | None:
        return self.states[self.index(label)].value

    def binding(self, label: str) -> exprlang.StateBinding:
        return exprlang.StateBinding(label, self.value_of(label))


def discrete(labels, values=None) -> DiscreteDomain:
    if values is None:
        return DiscreteDomain(tuple(StateDef(str(x)) for x in labels))
    return DiscreteDomain(tuple(StateDef(str(x), float(v)) for x, v in zip(labels, values, strict=True)))


def numeric_states(values) -> DiscreteDomain:
    return DiscreteDomain(tuple(StateDef(exprlang.format_number(float(v)), float(v)) for v in values))


BOOLEAN = discrete(["False", "True"], [0.0, 1.0])


@dataclass(frozen=True)
class ContinuousDomain:
    lower: float
    upper: float


# -- conditional definitions -----------------------------------------------------


@dataclass(frozen=True)
class TableCpd:
    """Row-major numbers: parent configurations ordered by parent declaration
    with the last parent cycling fastest; chance/decision rows hold one
    probability per state, utility rows hold a single value."""

    values: tuple[float, ...]


@dataclass(frozen=True)
class ExpressionCpd:
    source: str

    @cached_property
    def expr(self) -> exprlang.Expr:
        return exprlang.parse_expression(self.source)


Cpd = TableCpd | ExpressionCpd


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str
    domain: DiscreteDomain | ContinuousDomain
    owner: str | None = None
    parents: tuple[str, ...] = ()
    informational_parents: tuple[str, ...] = ()
    cpd: Cpd | None = None
    bins: int | None = None

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.domain, DiscreteDomain)


# -- diagram ----------------------------------------------------------------------


@dataclass(frozen=True)
class InfluenceDiagram:
    variables: tuple[Variable, ...]
    stage_order: tuple[str, ...]
    utility_aggregates: tuple[tuple[str, tuple[str, ...]], ...] = ()
    overlays: tuple[tuple[str, tuple[tuple[str, Cpd], ...]], ...] = ()
    meta: tuple[tuple[str, str], ...] = ()

    @cached_property
    def _by_name(self) -> dict[str, Variable]:
        return {v.name: v for v in self.variables}

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def variable(self, name: str) -> Variable:
        try:
            return self._by_name[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def decisions(self) -> tuple[Variable, ...]:
        return tuple(v for v in self.variables if v.kind == DECISION)

    def utilities(self) -> tuple[Variable, ...]:
        return tuple(v for v in self.variables if v.kind == UTILITY)

    def cpd_parents(self, name: str) -> tuple[str, ...]:
        """Parents that condition the variable's table: informational parents
        for decisions, probabilistic parents otherwise."""
        v = self.variable(name)
        return v.informational_parents if v.kind == DECISION else v.parents

    def aggregate_components(self, name: str) -> tuple[str, ...] | None:
        for agg, parts in self.utility_aggregates:
            if agg == name:
                return parts
        return None

    def utility_root(self, owner: str) -> Variable:
        """The node whose expectation the owner maximizes: the owner's declared
        aggregate if any, else their unique utility node."""
        aggs = [self.variable(a) for a, _ in self.utility_aggregates if self.variable(a).owner == owner]
        if len(aggs) == 1:
            return aggs[0]
        if len(aggs) > 1:
            raise ModelError(f"multiple utility aggregates for {owner}")
        component_names = {p for _, parts in self.utility_aggregates for p in parts}
        owned = [v for v in self.utilities() if v.owner == owner and v.name not in component_names]
        if len(owned) != 1:
            raise ModelError(f"expected exactly one utility root for {owner}, found {[v.name for v in owned]}")
        return owned[0]

    def stage_decisions(self) -> tuple[Variable, ...]:
        return tuple(self.variable(n) for n in self.stage_order)

    def stage_index(self, name: str) -> int:
        try:
            return self.stage_order.index(name)
        except ValueError:
            raise ModelError(f"{name!r} is not a staged decision") from None

    def earlier_decisions(self, name: str) -> tuple[str, ...]:
        return self.stage_order[: self.stage_index(name)]

    # -- functional updates --

    def with_variable(self, updated: Variable) -> "InfluenceDiagram":
        if updated.name not in self._by_name:
            raise ModelError(f"unknown variable {updated.name!r}")
        return replace(self, variables=tuple(updated if v.name == updated.name else v for v in self.variables))

    def with_cpd(self, name: str, cpd: Cpd) -> "InfluenceDiagram":
        return self.with_variable(replace(self.variable(name), cpd=cpd))

    def with_informational_parents(self, name: str, parents: tuple[str, ...]) -> "InfluenceDiagram":
        return self.with_variable(replace(self.variable(name), informational_parents=parents))

    def overlay_for(self, owner: str) -> dict[str, Cpd]:
        for agent, entries in self.overlays:
            if agent == owner:
                return dict(entries)
        return {}

    def resolved_for(self, owner: str | None) -> "InfluenceDiagram":
        """The diagram as seen by one agent: overlay CPDs swapped in."""
        if owner is None:
            return self
        overlay = self.overlay_for(owner)
        if not overlay:
            return self
        out = self
        for name, cpd in overlay.items():
            out = out.with_cpd(name, cpd)
        return out

    def meta_value(self, key: str) -> str | None:
        for k, v in self.meta:
            if k == key:
                return v
        return None


def configurations(diagram: InfluenceDiagram, parents: tuple[str, ...]):
    """All parent configurations as label tuples, last parent fastest."""
    if not parents:
        return (tuple(),)
    axes = []
    for p in parents:
        domain = diagram.variable(p).domain
        if not isinstance(domain, DiscreteDomain):
            raise ModelError(f"{p!r} is continuous; discretize before enumerating configurations")
        axes.append(domain.labels)
    return tuple(itertools.product(*axes))


# -- validation --------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    variables: tuple[str, ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]
    warnings: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def messages(self) -> list[str]:
        return [f"error[{v.rule}]: {v.message}" for v in self.violations] + [
            f"warning[{v.rule}]: {v.message}" for v in self.warnings
        ]


def validate_diagram(diagram: InfluenceDiagram) -> ValidationReport:
    """Collect every structural problem instead of stopping at the first."""
    errors: list[Violation] = []
    warnings: list[Violation] = []
    seen: set[str] = set()
    for v in diagram.variables:
        if v.name in seen:
            errors.append(Violation("duplicate-name", f"variable {v.name!r} declared twice", (v.name,)))
        seen.add(v.name)

    names = set(seen)
    for v in diagram.variables:
        errors.extend(_check_variable(diagram, v, names))

    errors.extend(_check_stage_order(diagram))
    errors.extend(_check_aggregates(diagram))
    cycle = _find_cycle(diagram)
    if cycle:
        errors.append(Violation("acyclicity", "dependency cycle: " + " -> ".join(cycle), tuple(sorted(set(cycle)))))
    else:
        errors.extend(_check_informational_order(diagram))

    if all(n in diagram._by_name for n in diagram.stage_order):
        warnings.extend(_alternation_warnings(diagram))
        warnings.extend(_completeness_warnings(diagram))
        warnings.extend(_dependence_warnings(diagram))
    return ValidationReport(tuple(errors), tuple(warnings))


def _check_variable(diagram: InfluenceDiagram, v: Variable, names: set[str]) -> list[Violation]:
    out: list[Violation] = []
    for p in v.parents + v.informational_parents:
        if p not in names:
            out.append(Violation("unknown-parent", f"{v.name} references unknown parent {p!r}", (v.name, p)))
    if v.kind not in (DECISION, CHANCE, UTILITY):
        out.append(Violation("kind", f"{v.name} has unknown kind {v.kind!r}", (v.name,)))
        return out
    if v.kind in (DECISION, UTILITY) and v.owner not in OWNERS:
        out.append(Violation("owner", f"{v.name} ({v.kind}) must declare owner defender or attacker", (v.name,)))
    if v.kind == DECISION and not v.is_discrete:
        out.append(Violation("discrete-decision", f"decision {v.name} must have a discrete domain", (v.name,)))
    if v.kind != DECISION and v.informational_parents:
        out.append(Violation("informational", f"{v.name} is not a decision but lists informational parents", (v.name,)))
    if isinstance(v.domain, DiscreteDomain):
        labels = v.domain.labels
        if len(set(labels)) != len(labels):
            out.append(Violation("states", f"{v.name} has duplicate state labels", (v.name,)))
        values = [s.value for s in v.domain.states if s.value is not None]
        if values and len(values) == len(labels) and any(b <= a for a, b in zip(values, values[1:])):
            out.append(Violation("states", f"{v.name} numeric state values must be strictly increasing", (v.name,)))
    else:
        if not (v.domain.lower < v.domain.upper):
            out.append(Violation("bounds", f"{v.name} needs lower < upper bounds", (v.name,)))
    if v.kind == UTILITY:
        children = [w.name for w in diagram.variables if v.name in w.parents + w.informational_parents]
        if children:
            out.append(Violation("utility-children", f"utility {v.name} has children {children}", (v.name,)))
    out.extend(_check_cpd(diagram, v, names))
    return out


def _check_cpd(diagram: InfluenceDiagram, v: Variable, names: set[str]) -> list[Violation]:
    out: list[Violation] = []
    is_aggregate = diagram.aggregate_components(v.name) is not None
    if v.cpd is None:
        if v.kind == CHANCE or (v.kind == UTILITY and not is_aggregate):
            out.append(Violation("cpd-missing", f"{v.name} has no table or expression", (v.name,)))
        return out
    if is_aggregate:
        out.append(Violation("aggregate", f"aggregate utility {v.name} must not define its own table", (v.name,)))
        return out
    cpd_parents = diagram.cpd_parents(v.name)
    if any(p not in names for p in cpd_parents):
        return out
    if isinstance(v.cpd, TableCpd):
        if any(p for p in cpd_parents if not diagram.variable(p).is_discrete):
            out.append(Violation("table-parents", f"{v.name} table conditions on a continuous parent", (v.name,)))
            return out
        n_configs = math.prod(diagram.variable(p).domain.size for p in cpd_parents) if cpd_parents else 1
        if v.kind == UTILITY:
            if len(v.cpd.values) != n_configs:
                out.append(Violation("table-shape", f"{v.name} expects {n_configs} values, got {len(v.cpd.values)}", (v.name,)))
        else:
            if not v.is_discrete:
                out.append(Violation("table-shape", f"continuous {v.name} cannot use a probability table", (v.name,)))
                return out
            k = v.domain.size
            if len(v.cpd.values) != n_configs * k:
                out.append(
                    Violation("table-shape", f"{v.name} expects {n_configs * k} probabilities, got {len(v.cpd.values)}", (v.name,))
                )
                return out
            for i in range(n_configs):
                row = v.cpd.values[i * k : (i + 1) * k]
                if any(p < 0 for p in row):
                    out.append(Violation("table-values", f"{v.name} row {i} has a negative probability", (v.name,)))
                elif abs(sum(row) - 1.0) > 1e-9:
                    out.append(Violation("table-sum", f"{v.name} row {i} sums to {sum(row)!r}, not 1", (v.name,)))
    else:
        try:
            expr = v.cpd.expr
        except Exception as exc:
            out.append(Violation("expression", f"{v.name}: {exc}", (v.name,)))
            return out
        problems = exprlang.check_expression(expr, frozenset(cpd_parents))
        out.extend(Violation("expression", f"{v.name}: {p}", (v.name,)) for p in problems)
        out.extend(_check_partition_coverage(diagram, v, expr))
    return out


def _check_partition_coverage(diagram: InfluenceDiagram, v: Variable, expr: exprlang.Expr) -> list[Violation]:
    if not isinstance(expr, exprlang.Partition):
        return []
    if expr.variable not in diagram._by_name:
        return []
    parent = diagram.variable(expr.variable)
    if not parent.is_discrete:
        return [Violation("partition", f"{v.name} partitions on continuous parent {parent.name}", (v.name,))]
    covered = set()
    for key, _ in expr.branches:
        matched = None
        for state in parent.domain.states:
            if key == state.label or (
                state.value is not None and _is_number(key) and abs(float(key) - state.value) <= 1e-9
            ):
                matched = state.label
                break
        if matched is None:
            return [Violation("partition", f"{v.name} partition key {key!r} matches no state of {parent.name}", (v.name,))]
        covered.add(matched)
    missing = [s for s in parent.domain.labels if s not in covered]
    if missing:
        return [Violation("partition", f"{v.name} partition misses states {missing} of {parent.name}", (v.name,))]
    return []


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _check_stage_order(diagram: InfluenceDiagram) -> list[Violation]:
    out: list[Violation] = []
    decisions = {v.name for v in diagram.decisions()}
    listed = set()
    for name in diagram.stage_order:
        if name in listed:
            out.append(Violation("stage-order", f"{name} listed twice in stage order", (name,)))
        listed.add(name)
        if name not in decisions:
            out.append(Violation("stage-order", f"stage order lists non-decision {name!r}", (name,)))
    for name in sorted(decisions - listed):
        out.append(Violation("stage-order", f"decision {name} missing from stage order", (name,)))
    return out


def _check_aggregates(diagram: InfluenceDiagram) -> list[Violation]:
    out: list[Violation] = []
    for agg, parts in diagram.utility_aggregates:
        if agg not in diagram._by_name or diagram.variable(agg).kind != UTILITY:
            out.append(Violation("aggregate", f"aggregate {agg!r} is not a utility variable", (agg,)))
            continue
        owner = diagram.variable(agg).owner
        for p in parts:
            if p not in diagram._by_name or diagram.variable(p).kind != UTILITY:
                out.append(Violation("aggregate", f"aggregate {agg} lists non-utility {p!r}", (agg, p)))
            elif diagram.variable(p).owner != owner:
                out.append(Violation("aggregate", f"aggregate {agg} mixes owners with {p}", (agg, p)))
    return out


def _find_cycle(diagram: InfluenceDiagram) -> list[str] | None:
    """Cycle over the union of probabilistic and informational arcs."""
    color: dict[str, int] = {}
    stack: list[str] = []

    def visit(name: str) -> list[str] | None:
        color[name] = 1
        stack.append(name)
        for p in diagram.cpd_parents(name):
            if p not in diagram._by_name:
                continue
            c = color.get(p, 0)
            if c == 1:
                return stack[stack.index(p) :] + [p]
            if c == 0:
                found = visit(p)
                if found:
                    return found
        stack.pop()
        color[name] = 2
        return None

    for v in diagram.variables:
        if color.get(v.name, 0) == 0:
            found = visit(v.name)
            if found:
                return found
    return None


def _check_informational_order(diagram: InfluenceDiagram) -> list[Violation]:
    out: list[Violation] = []
    stages = {name: i for i, name in enumerate(diagram.stage_order)}
    for v in diagram.decisions():
        if v.name not in stages:
            continue
        for p in v.informational_parents:
            if p not in diagram._by_name:
                continue
            parent = diagram.variable(p)
            if parent.kind == DECISION:
                if stages.get(p, -1) >= stages[v.name]:
                    out.append(
                        Violation(
                            "informational-order",
                            f"informational arc {p} -> {v.name} contradicts stage order",
                            (p, v.name),
                        )
                    )
            elif parent.kind == CHANCE:
                for anc in _decision_ancestors(diagram, p):
                    if stages.get(anc, -1) >= stages[v.name]:
                        out.append(
                            Violation(
                                "informational-order",
                                f"{v.name} observes {p}, which depends on later decision {anc}",
                                (p, v.name, anc),
                            )
                        )
            else:
                out.append(Violation("informational", f"{v.name} cannot observe utility {p}", (p, v.name)))
    return out


def _decision_ancestors(diagram: InfluenceDiagram, name: str) -> set[str]:
    seen: set[str] = set()
    frontier = [name]
    out: set[str] = set()
    while frontier:
        n = frontier.pop()
        if n in seen or n not in diagram._by_name:
            continue
        seen.add(n)
        v = diagram.variable(n)
        if v.kind == DECISION and n != name:
            out.add(n)
        frontier.extend(diagram.cpd_parents(n))
    return out


def _alternation_warnings(diagram: InfluenceDiagram) -> list[Violation]:
    order = diagram.stage_order
    if len(order) < 2:
        if len(order) == 1:
            return [Violation("alternation", "single decision stage: no alternation possible", order)]
        return []
    out = []
    for a, b in zip(order, order[1:]):
        if diagram.variable(a).owner == diagram.variable(b).owner:
            out.append(Violation("alternation", f"stages {a} and {b} share owner {diagram.variable(a).owner}", (a, b)))
    return out


def _completeness_warnings(diagram: InfluenceDiagram) -> list[Violation]:
    out = []
    for v in diagram.decisions():
        if v.name not in diagram.stage_order:
            continue
        missing = [d for d in diagram.earlier_decisions(v.name) if d not in v.informational_parents]
        if missing:
            out.append(
                Violation("informational-completeness", f"{v.name} is not informed by earlier decisions {missing}", (v.name,))
            )
    return out


def _dependence_warnings(diagram: InfluenceDiagram) -> list[Violation]:
    out = []
    for v in diagram.utilities():
        if v.owner not in OWNERS:
            continue
        other = ATTACKER if v.owner == DEFENDER else DEFENDER
        crossing = [p for p in v.parents if p in diagram._by_name and diagram.variable(p).kind == DECISION and diagram.variable(p).owner == other]
        if crossing:
            out.append(
                Violation(
                    "dependence-shape",
                    f"{v.owner} utility {v.name} depends directly on {other} decisions {crossing}; "
                    "route opponent influence through outcome nodes",
                    (v.name, *crossing),
                )
            )
    return out


# -- operations ----------------------------------------------------------------------


def stage_order(diagram: InfluenceDiagram) -> tuple[tuple[str, str], ...]:
    """(decision, owner) pairs in play order.

    Uses the declared order when present; otherwise derives it from
    informational arcs, breaking ties by declaration order.
    """
    if diagram.stage_order:
        return tuple((n, diagram.variable(n).owner or "") for n in diagram.stage_order)
    decisions = [v.name for v in diagram.decisions()]
    position = {n: i for i, n in enumerate(decisions)}
    remaining = set(decisions)
    order: list[str] = []
    while remaining:
        ready = [
            n
            for n in remaining
            if not any(p in remaining for p in diagram.variable(n).informational_parents if p in position)
        ]
        if not ready:
            raise ModelError("informational arcs among decisions contain a cycle")
        nxt = min(ready, key=position.__getitem__)
        order.append(nxt)
        remaining.remove(nxt)
    return tuple((n, diagram.variable(n).owner or "") for n in order)


def uniform_table(diagram: InfluenceDiagram, name: str) -> TableCpd:
    v = diagram.variable(name)
    if not v.is_discrete:
        raise ModelError(f"{name} is not discrete")
    k = v.domain.size
    n_configs = len(configurations(diagram, diagram.cpd_parents(name)))
    return TableCpd(tuple([1.0 / k] * (n_configs * k)))


def set_decision_uniform(diagram: InfluenceDiagram, name: str) -> InfluenceDiagram:
    """Reset one decision to the open-minded uniform table."""
    if diagram.variable(name).kind != DECISION:
        raise ModelError(f"{name} is not a decision")
    return diagram.with_cpd(name, uniform_table(diagram, name))


def overwrite_decision_cpd(
    diagram: InfluenceDiagram,
    name: str,
    assignments,
) -> InfluenceDiagram:
    """Replace a decision's table with a solved policy.

    `assignments` maps each informational-parent configuration (tuple of state
    labels, last parent fastest) to the set of maximizing states; mass is split
    equally among them. Missing configurations and mass errors are rejected.
    """
    v = diagram.variable(name)
    if v.kind != DECISION:
        raise ModelError(f"{name} is not a decision")
    if hasattr(assignments, "as_assignments"):
        assignments = assignments.as_assignments()
    parents = diagram.cpd_parents(name)
    configs = configurations(diagram, parents)
    labels = v.domain.labels
    rows: list[float] = []
    for config in configs:
        if config not in assignments:
            raise ModelError(f"policy for {name} misses configuration {config}")
        chosen = list(assignments[config])
        if not chosen:
            raise ModelError(f"policy for {name} assigns no state at {config}")
        unknown = [s for s in chosen if s not in labels]
        if unknown:
            raise ModelError(f"policy for {name} uses unknown states {unknown}")
        share = 1.0 / len(chosen)
        row = [share if s in chosen else 0.0 for s in labels]
        if abs(sum(row) - 1.0) > 1e-9:
            raise ModelError(f"policy mass for {name} at {config} sums to {sum(row)!r}")
        rows.extend(row)
    return diagram.with_cpd(name, TableCpd(tuple(rows)))


# -- builder -----------------------------------------------------------------------


class DiagramBuilder:
    """Incremental construction helper used by tests and the model loader."""

    def __init__(self):
        self._variables: list[Variable] = []

    def decision(self, name, owner, states, values=None, inform=()):
        domain = numeric_states(states) if values == "numeric" else discrete(states, values)
        self._variables.append(
            Variable(name, DECISION, domain, owner=owner, informational_parents=tuple(inform))
        )
        return self

    def chance(self, name, states=None, values=None, parents=(), table=None, expression=None, bounds=None, bins=None):
        domain = ContinuousDomain(*bounds) if bounds is not None else discrete(states, values)
        cpd = TableCpd(tuple(table)) if table is not None else (ExpressionCpd(expression) if expression else None)
        self._variables.append(Variable(name, CHANCE, domain, parents=tuple(parents), cpd=cpd, bins=bins))
        return self

    def utility(self, name, owner, parents=(), table=None, expression=None):
        cpd = TableCpd(tuple(table)) if table is not None else (ExpressionCpd(expression) if expression else None)
        self._variables.append(
            Variable(name, UTILITY, ContinuousDomain(-math.inf, math.inf), owner=owner, parents=tuple(parents), cpd=cpd)
        )
        return self

    def build(self, stage_order=None, utility_aggregates=(), overlays=(), meta=()) -> InfluenceDiagram:
        order = tuple(stage_order) if stage_order else tuple(v.name for v in self._variables if v.kind == DECISION)
        diagram = InfluenceDiagram(
            variables=tuple(self._variables),
            stage_order=order,
            utility_aggregates=tuple((a, tuple(ps)) for a, ps in dict(utility_aggregates).items()),
            overlays=tuple(overlays),
            meta=tuple(meta),
        )
        for v in diagram.decisions():
            if v.cpd is None:
                diagram = diagram.with_cpd(v.name, uniform_table(diagram, v.name))
        return diagram
