"""Sequential game solving by backward induction.

Stages are solved last to first. At each stage the diagram is taken in the
stage owner's view, the owner's aggregate utility is maximized for every
configuration of what the owner knows at that point, and the decision's
uniform table is overwritten with the resulting policy (ties split equally).
Earlier stages then treat that behavior as just another conditional
distribution, which is what makes plain conditioning on earlier decisions act
like an intervention.

Near-ties are controlled by a TiePolicy: options count as tied when their
expected utilities are within max(absolute, relative * scale), where scale is
the largest absolute utility value reachable at that stage. Discrete
hand-built games resolve exact ties with the absolute floor; discretized
hybrid games get a tolerance proportional to the money at stake.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model as M
from .discretize import DiscretizationResult, discretize_diagram
from .errors import StageError
from .infer import CompiledNet


@dataclass(frozen=True)
class TiePolicy:
    absolute: float = 1e-9
    relative: float = 1e-6

    def threshold(self, scale: float) -> float:
        return max(self.absolute, self.relative * scale)


@dataclass(frozen=True)
class PolicyEntry:
    config: tuple[str, ...]
    reachable: bool
    expected: tuple[float, ...] | None
    maximizers: tuple[str, ...]


@dataclass(frozen=True)
class StagePolicy:
    decision: str
    owner: str
    parents: tuple[str, ...]
    options: tuple[str, ...]
    entries: tuple[PolicyEntry, ...]
    scale: float
    threshold: float

    def as_assignments(self) -> dict[tuple[str, ...], tuple[str, ...]]:
        return {e.config: e.maximizers for e in self.entries}

    def entry_for(self, config: tuple[str, ...]) -> PolicyEntry:
        for e in self.entries:
            if e.config == config:
                return e
        raise StageError(f"no policy entry for configuration {config}")


@dataclass(frozen=True)
class GameSolution:
    stages: tuple[StagePolicy, ...]
    defender_value: float
    attacker_value: float
    diagram: M.InfluenceDiagram = field(compare=False)

    def stage(self, name: str) -> StagePolicy:
        for s in self.stages:
            if s.decision == name:
                return s
        raise StageError(f"stage {name!r} was not solved")


def _owner_scale(net: CompiledNet, diagram: M.InfluenceDiagram, root: str) -> float:
    components = diagram.aggregate_components(root) or (root,)
    scale = 0.0
    for c in components:
        values = net.utility_values(c)
        if values.size:
            scale += float(np.abs(values).max())
    return scale


def solve_stage(
    diagram: M.InfluenceDiagram,
    name: str,
    evidence: dict[str, str] | None = None,
    tie: TiePolicy = TiePolicy(),
) -> StagePolicy:
    """Optimal policy for one decision, given the diagram as it stands.

    Later stages must already hold their solved policies for the result to be
    the backward-induction policy. Configurations with zero probability under
    the evidence get a uniform fill and are flagged unreachable.
    """
    evidence = dict(evidence or {})
    v = diagram.variable(name)
    if v.kind != M.DECISION:
        raise StageError(f"{name} is not a decision")
    if v.owner not in M.OWNERS:
        raise StageError(f"{name} has no owner")
    if name in evidence:
        raise StageError(f"{name} is already committed to {evidence[name]!r}")
    view = M.set_decision_uniform(diagram.resolved_for(v.owner), name)
    net = CompiledNet(view)
    root = view.utility_root(v.owner).name
    scale = _owner_scale(net, view, root)
    threshold = tie.threshold(scale)
    assert isinstance(v.domain, M.DiscreteDomain)
    options = v.domain.labels
    parents = diagram.cpd_parents(name)
    entries = []
    for config in M.configurations(diagram, parents):
        bound = dict(zip(parents, config))
        if any(evidence.get(p, lbl) != lbl for p, lbl in bound.items()):
            entries.append(PolicyEntry(config, False, None, options))
            continue
        merged = {**evidence, **bound}
        if parents and net.probability(merged) <= 0.0:
            entries.append(PolicyEntry(config, False, None, options))
            continue
        scores = tuple(net.expected_utility(root, {**merged, name: opt}) for opt in options)
        best = max(scores)
        maximizers = tuple(opt for opt, s in zip(options, scores) if s >= best - threshold)
        entries.append(PolicyEntry(config, True, scores, maximizers))
    return StagePolicy(name, v.owner, parents, options, tuple(entries), scale, threshold)


def backward_induct(
    diagram: M.InfluenceDiagram,
    evidence: dict[str, str] | None = None,
    stages: tuple[str, ...] | None = None,
    tie: TiePolicy = TiePolicy(),
) -> GameSolution:
    """Solve the listed stages (default: all) from last to first.

    Each solved policy replaces the decision's table before the next earlier
    stage is solved. Committed decisions belong in `evidence`, not `stages`.
    """
    evidence = dict(evidence or {})
    order = [n for n, _ in M.stage_order(diagram)]
    chosen = order if stages is None else [n for n in order if n in stages]
    if stages is not None and set(stages) - set(chosen):
        raise StageError(f"unknown stages {sorted(set(stages) - set(chosen))}")
    solved: dict[str, StagePolicy] = {}
    current = diagram
    for name in reversed(chosen):
        policy = solve_stage(current, name, evidence, tie)
        solved[name] = policy
        current = M.overwrite_decision_cpd(current, name, policy.as_assignments())
    defender_value = _root_value(current, M.DEFENDER, evidence)
    attacker_value = _root_value(current, M.ATTACKER, evidence)
    return GameSolution(tuple(solved[n] for n in chosen), defender_value, attacker_value, current)


def _root_value(diagram: M.InfluenceDiagram, owner: str, evidence: dict[str, str]) -> float:
    view = diagram.resolved_for(owner)
    root = view.utility_root(owner).name
    return CompiledNet(view).expected_utility(root, evidence)


def rollback(diagram: M.InfluenceDiagram, from_stage: str) -> M.InfluenceDiagram:
    """Reset the given stage and every later one to the uniform table."""
    order = [n for n, _ in M.stage_order(diagram)]
    if from_stage not in order:
        raise StageError(f"{from_stage!r} is not a staged decision")
    out = diagram
    for name in order[order.index(from_stage) :]:
        out = M.set_decision_uniform(out, name)
    return out


def solve_hybrid(
    diagram: M.InfluenceDiagram,
    default_bins: int | None = None,
    tie: TiePolicy = TiePolicy(),
    quadrature: int | None = None,
) -> tuple[GameSolution, DiscretizationResult]:
    """Discretize a hybrid diagram, then solve the discrete game."""
    kwargs = {}
    if default_bins is not None:
        kwargs["default_bins"] = default_bins
    if quadrature is not None:
        kwargs["quadrature"] = quadrature
    result = discretize_diagram(diagram, **kwargs)
    return backward_induct(result.diagram, tie=tie), result


# -- anticipated game trees -----------------------------------------------------------


@dataclass(frozen=True)
class TreeBranch:
    label: str
    probability: float | None
    chosen: bool | None
    value: float
    child: "TreeNode | None"


@dataclass(frozen=True)
class TreeNode:
    variable: str
    owner: str
    kind: str  # decision at the root stage, chance for anticipated stages
    value: float
    branches: tuple[TreeBranch, ...]


def build_stage_tree(
    diagram: M.InfluenceDiagram,
    stage: str,
    evidence: dict[str, str] | None = None,
    tie: TiePolicy = TiePolicy(),
) -> TreeNode:
    """Anticipated play-out from one stage under the solved diagram.

    The root stage is a decision node; every later stage appears as a chance
    node following its solved policy, viewed by and valued for the root
    stage's owner. Zero-probability branches are pruned.
    """
    evidence = dict(evidence or {})
    order = [n for n, _ in M.stage_order(diagram)]
    if stage not in order:
        raise StageError(f"{stage!r} is not a staged decision")
    tail = order[order.index(stage) :]
    owner = diagram.variable(stage).owner or ""
    # the root stage is explored option by option, so its policy must not
    # zero out any branch
    view = M.set_decision_uniform(diagram.resolved_for(owner), stage)
    net = CompiledNet(view)
    root = view.utility_root(owner).name
    threshold = tie.threshold(_owner_scale(net, view, root))

    def node(path: dict[str, str], remaining: list[str]) -> TreeNode:
        name = remaining[0]
        v = view.variable(name)
        assert isinstance(v.domain, M.DiscreteDomain)
        is_root = name == stage
        marginal = None if is_root else net.posterior_marginal(name, path)
        branches = []
        for label in v.domain.labels:
            p = None if marginal is None else marginal[label]
            if p is not None and p <= 0.0:
                continue
            sub_path = {**path, name: label}
            child = node(sub_path, remaining[1:]) if len(remaining) > 1 else None
            value = child.value if child else net.expected_utility(root, sub_path)
            branches.append(TreeBranch(label, p, None, value, child))
        best = max(b.value for b in branches)
        if is_root:
            branches = [
                TreeBranch(b.label, None, b.value >= best - threshold, b.value, b.child) for b in branches
            ]
            value = best
        else:
            value = sum(b.probability * b.value for b in branches)
        return TreeNode(name, v.owner or "", "decision" if is_root else "chance", value, tuple(branches))

    return node(evidence, tail)
