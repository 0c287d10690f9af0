"""Stable, machine-readable renderings of solutions and trees.

Every number leaves the engine as a decimal string with nine significant
digits. Documents contain no timestamps or other run-dependent fields, so the
same model and the same inputs always produce byte-identical output; tests
and remote consumers can compare documents directly.
"""

from __future__ import annotations

import json

from .dynamic import Recommendation, Session, WhatIfResult
from .solver import GameSolution, StagePolicy, TreeNode


def num9(x: float) -> str:
    """Nine-significant-digit decimal rendering used across all interfaces."""
    return format(float(x), ".9g")


def policy_document(policy: StagePolicy) -> dict:
    return {
        "decision": policy.decision,
        "owner": policy.owner,
        "parents": list(policy.parents),
        "options": list(policy.options),
        "scale": num9(policy.scale),
        "threshold": num9(policy.threshold),
        "policy": [
            {
                "config": list(e.config),
                "reachable": e.reachable,
                "expected": None if e.expected is None else [num9(x) for x in e.expected],
                "maximizers": list(e.maximizers),
            }
            for e in policy.entries
        ],
    }


def solution_document(
    solution: GameSolution,
    model_hash: str | None = None,
    evidence: dict[str, str] | None = None,
    bins: int | None = None,
) -> dict:
    doc: dict = {}
    if model_hash is not None:
        doc["model_hash"] = model_hash
    if bins is not None:
        doc["bins"] = bins
    if evidence:
        doc["evidence"] = dict(sorted(evidence.items()))
    doc["defender_value"] = num9(solution.defender_value)
    doc["attacker_value"] = num9(solution.attacker_value)
    doc["stages"] = [policy_document(s) for s in solution.stages]
    return doc


def solution_json(solution: GameSolution, **kwargs) -> str:
    return json.dumps(solution_document(solution, **kwargs), indent=2, sort_keys=True) + "\n"


def tree_document(node: TreeNode) -> dict:
    return {
        "variable": node.variable,
        "owner": node.owner,
        "kind": node.kind,
        "value": num9(node.value),
        "branches": [
            {
                "label": b.label,
                "probability": None if b.probability is None else num9(b.probability),
                "chosen": b.chosen,
                "value": num9(b.value),
                "child": None if b.child is None else tree_document(b.child),
            }
            for b in node.branches
        ],
    }


def render_tree_text(node: TreeNode) -> str:
    """Indented plain-text play-out, options first, probabilities inline."""
    lines: list[str] = []

    def walk(n: TreeNode, prefix: str) -> None:
        lines.append(f"{prefix}{n.variable} [{n.kind}, {n.owner}] value {num9(n.value)}")
        for i, b in enumerate(n.branches):
            last = i == len(n.branches) - 1
            stem = "`-- " if last else "|-- "
            mark = ""
            if b.chosen:
                mark = " *"
            if b.probability is not None:
                mark += f" p={num9(b.probability)}"
            lines.append(f"{prefix}{stem}{n.variable}={b.label}{mark} value {num9(b.value)}")
            if b.child is not None:
                walk(b.child, prefix + ("    " if last else "|   "))

    walk(node, "")
    return "\n".join(lines) + "\n"


def render_tree_dot(node: TreeNode) -> str:
    """Graphviz rendering: boxes for the root decision, ellipses for chance."""
    lines = ["digraph stage_tree {", "  node [fontsize=10];"]
    counter = [0]

    def emit(n: TreeNode) -> str:
        nid = f"n{counter[0]}"
        counter[0] += 1
        shape = "box" if n.kind == "decision" else "ellipse"
        lines.append(f'  {nid} [label="{n.variable}\\n{num9(n.value)}", shape={shape}];')
        for b in n.branches:
            if b.child is not None:
                cid = emit(b.child)
            else:
                cid = f"n{counter[0]}"
                counter[0] += 1
                lines.append(f'  {cid} [label="{num9(b.value)}", shape=plaintext];')
            attrs = [f'label="{b.label}"']
            if b.probability is not None:
                attrs.append(f'taillabel="{num9(b.probability)}"')
            if b.chosen:
                attrs.append("penwidth=2")
            lines.append(f"  {nid} -> {cid} [{', '.join(attrs)}];")
        return nid

    emit(node)
    lines.append("}")
    return "\n".join(lines) + "\n"


def recommendation_document(rec: Recommendation) -> dict:
    return {
        "stage": rec.stage,
        "owner": rec.owner,
        "given": {name: state for name, state in rec.config},
        "options": list(rec.options),
        "expected": [num9(x) for x in rec.expected],
        "maximizers": list(rec.maximizers),
        "choice": rec.choice,
        "value": num9(rec.value),
        "threshold": num9(rec.threshold),
    }


def whatif_document(result: WhatIfResult) -> dict:
    return {
        "assignments": {name: state for name, state in result.assignments},
        "defender_value": num9(result.defender_value),
        "attacker_value": num9(result.attacker_value),
        "recommendation": None if result.recommendation is None else recommendation_document(result.recommendation),
    }


def session_document(session: Session, status: str | None = None) -> dict:
    doc = {
        "session": session.session_id,
        "model": session.model_name,
        "model_hash": session.hash,
        "bins": session.bins,
        "tie": {"absolute": num9(session.tie.absolute), "relative": num9(session.tie.relative)},
        "seq": session.seq,
        "stages": session.stage_rows(),
        "evidence": dict(sorted(session.evidence.items())),
        "next_stage": session.next_stage(),
    }
    if status is not None:
        doc["status"] = status
    return doc
