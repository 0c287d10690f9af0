"""Model files: JSON loading, canonical serialization, hashing.

A model file is one JSON object:

  {
    "variables": { name: {kind, owner?, states|bounds, parents?,
                          informational_parents?, table|expression?, bins?} },
    "stage_order": [name, ...],
    "utility_aggregates": { name: [component, ...] },
    "overlays": { owner: { name: {table|expression} } },
    "meta": { key: string }
  }

Declaration order of variables is the JSON object order. Probability rows are
renormalized on load when they sum to 1 within 1e-5 and rejected otherwise.
The canonical form sorts object keys and renders probabilities with six
significant digits; the model hash is the SHA-256 of that canonical text, so
it is stable across load/save cycles and across machines.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

from . import model as M
from .errors import ModelFileError
from .exprlang import format_number

RENORMALIZE_TOLERANCE = 1e-5
PROBABILITY_DIGITS = 6

KINDS = (M.DECISION, M.CHANCE, M.UTILITY)
_VARIABLE_KEYS = {"kind", "owner", "states", "bounds", "parents", "informational_parents", "table", "expression", "bins"}


def load_model(path: str | Path) -> M.InfluenceDiagram:
    """Parse and validate a model file, raising on any structural error."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}", [str(exc)]) from exc
    return parse_model(text, source=str(path))


def parse_model(text: str, source: str = "<string>") -> M.InfluenceDiagram:
    diagram, problems, _ = check_model_text(text, source)
    if problems:
        raise ModelFileError(f"{source}: {len(problems)} problem(s)\n" + "\n".join(problems), problems)
    assert diagram is not None
    return diagram


def check_model_text(text: str, source: str = "<string>"):
    """Parse without raising; returns (diagram or None, problems, warnings).

    All problems are collected in one pass so a single round trip reports
    everything wrong with a file.
    """
    problems: list[str] = []
    warnings: list[str] = []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        return None, [f"invalid JSON: {exc}"], []
    if not isinstance(doc, dict):
        return None, ["top level must be a JSON object"], []

    raw_vars = doc.get("variables")
    if not isinstance(raw_vars, dict) or not raw_vars:
        return None, ["'variables' must be a non-empty object"], []

    variables: list[M.Variable] = []
    for name, spec in raw_vars.items():
        v = _parse_variable(str(name), spec, problems)
        if v is not None:
            variables.append(v)

    stage = doc.get("stage_order", [])
    if not isinstance(stage, list) or not all(isinstance(s, str) for s in stage):
        problems.append("'stage_order' must be a list of decision names")
        stage = []

    aggregates = []
    raw_aggs = doc.get("utility_aggregates", {})
    if not isinstance(raw_aggs, dict):
        problems.append("'utility_aggregates' must map utility names to component lists")
    else:
        for agg, parts in raw_aggs.items():
            if not isinstance(parts, list) or not all(isinstance(p, str) for p in parts):
                problems.append(f"aggregate {agg!r} components must be a list of names")
            else:
                aggregates.append((str(agg), tuple(parts)))

    overlays = []
    raw_overlays = doc.get("overlays", {})
    if not isinstance(raw_overlays, dict):
        problems.append("'overlays' must map owner to variable tables")
    else:
        for owner, entries in raw_overlays.items():
            if owner not in M.OWNERS:
                problems.append(f"overlay owner {owner!r} must be defender or attacker")
                continue
            if not isinstance(entries, dict):
                problems.append(f"overlay for {owner} must be an object")
                continue
            parsed = []
            for vname, body in entries.items():
                cpd = _parse_cpd(f"overlay {owner}.{vname}", body, problems)
                if cpd is not None:
                    parsed.append((str(vname), cpd))
            overlays.append((owner, tuple(parsed)))

    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        problems.append("'meta' must be an object of strings")
        meta = {}

    unknown = set(doc) - {"variables", "stage_order", "utility_aggregates", "overlays", "meta"}
    if unknown:
        problems.append(f"unknown top-level keys {sorted(unknown)}")

    if problems:
        return None, problems, warnings

    diagram = M.InfluenceDiagram(
        variables=tuple(variables),
        stage_order=tuple(stage),
        utility_aggregates=tuple(aggregates),
        overlays=tuple(overlays),
        meta=tuple((str(k), str(v)) for k, v in meta.items()),
    )
    for v in diagram.decisions():
        if v.cpd is None:
            try:
                diagram = diagram.with_cpd(v.name, M.uniform_table(diagram, v.name))
            except Exception:
                pass  # bad parents; validation reports the cause

    try:
        diagram = renormalize(diagram)
    except ModelFileError as exc:
        return None, list(exc.report), warnings

    report = M.validate_diagram(diagram)
    problems.extend(f"{v.rule}: {v.message}" for v in report.violations)
    warnings.extend(f"{v.rule}: {v.message}" for v in report.warnings)
    if problems:
        return None, problems, warnings
    for owner, entries in diagram.overlays:
        for vname, _ in entries:
            if vname not in diagram:
                problems.append(f"overlay for {owner} targets unknown variable {vname!r}")
    return (None if problems else diagram), problems, warnings


def _parse_variable(name: str, spec, problems: list[str]) -> M.Variable | None:
    if not isinstance(spec, dict):
        problems.append(f"{name}: variable spec must be an object")
        return None
    unknown = set(spec) - _VARIABLE_KEYS
    if unknown:
        problems.append(f"{name}: unknown keys {sorted(unknown)}")
    kind = spec.get("kind")
    if kind not in KINDS:
        problems.append(f"{name}: kind must be one of {list(KINDS)}")
        return None
    owner = spec.get("owner")
    if owner is not None and owner not in M.OWNERS:
        problems.append(f"{name}: owner must be defender or attacker")
        owner = None

    domain = _parse_domain(name, spec, kind, problems)
    if domain is None:
        return None

    parents = _parse_names(name, "parents", spec.get("parents", []), problems)
    inform = _parse_names(name, "informational_parents", spec.get("informational_parents", []), problems)
    if "table" in spec and "expression" in spec:
        problems.append(f"{name}: give a table or an expression, not both")
        return None
    cpd = _parse_cpd(name, spec, problems) if ("table" in spec or "expression" in spec) else None

    bins = spec.get("bins")
    if bins is not None and (not isinstance(bins, int) or isinstance(bins, bool) or bins < 2):
        problems.append(f"{name}: bins must be an integer >= 2")
        bins = None
    return M.Variable(name, kind, domain, owner=owner, parents=parents, informational_parents=inform, cpd=cpd, bins=bins)


def _parse_domain(name: str, spec, kind: str, problems: list[str]):
    has_states = "states" in spec
    has_bounds = "bounds" in spec
    if kind == M.UTILITY:
        if has_states or has_bounds:
            problems.append(f"{name}: utility variables take no states or bounds")
        return M.ContinuousDomain(-math.inf, math.inf)
    if has_states == has_bounds:
        problems.append(f"{name}: give exactly one of states or bounds")
        return None
    if has_bounds:
        bounds = spec["bounds"]
        if not (isinstance(bounds, list) and len(bounds) == 2 and all(isinstance(b, (int, float)) for b in bounds)):
            problems.append(f"{name}: bounds must be [lower, upper]")
            return None
        return M.ContinuousDomain(float(bounds[0]), float(bounds[1]))
    states = spec["states"]
    if not isinstance(states, list) or not states:
        problems.append(f"{name}: states must be a non-empty list")
        return None
    defs = []
    for s in states:
        if isinstance(s, (int, float)) and not isinstance(s, bool):
            defs.append(M.StateDef(format_number(float(s)), float(s)))
        elif isinstance(s, str):
            defs.append(M.StateDef(s))
        elif isinstance(s, dict) and isinstance(s.get("label"), str):
            value = s.get("value")
            if value is not None and not isinstance(value, (int, float)):
                problems.append(f"{name}: state value for {s['label']!r} must be a number")
                value = None
            extra = set(s) - {"label", "value"}
            if extra:
                problems.append(f"{name}: state {s['label']!r} has unknown keys {sorted(extra)}")
            defs.append(M.StateDef(s["label"], None if value is None else float(value)))
        else:
            problems.append(f"{name}: bad state entry {s!r}")
            return None
    return M.DiscreteDomain(tuple(defs))


def _parse_names(name: str, key: str, raw, problems: list[str]) -> tuple[str, ...]:
    if not isinstance(raw, list) or not all(isinstance(p, str) for p in raw):
        problems.append(f"{name}: {key} must be a list of names")
        return ()
    return tuple(raw)


def _parse_cpd(name: str, spec, problems: list[str]) -> M.Cpd | None:
    if not isinstance(spec, dict):
        problems.append(f"{name}: conditional spec must be an object")
        return None
    if "expression" in spec:
        expr = spec["expression"]
        if not isinstance(expr, str):
            problems.append(f"{name}: expression must be a string")
            return None
        return M.ExpressionCpd(expr)
    table = spec.get("table")
    if not isinstance(table, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in table):
        problems.append(f"{name}: table must be a list of numbers")
        return None
    return M.TableCpd(tuple(float(x) for x in table))


def renormalize(diagram: M.InfluenceDiagram) -> M.InfluenceDiagram:
    """Rescale probability rows that drifted within tolerance; reject others."""
    problems: list[str] = []
    out = diagram
    for v in diagram.variables:
        if v.kind == M.UTILITY or not isinstance(v.cpd, M.TableCpd) or not v.is_discrete:
            continue
        k = v.domain.size
        values = list(v.cpd.values)
        if len(values) % k:
            continue
        changed = False
        for i in range(len(values) // k):
            row = values[i * k : (i + 1) * k]
            total = sum(row)
            if abs(total - 1.0) <= 1e-12:
                continue
            if abs(total - 1.0) > RENORMALIZE_TOLERANCE:
                problems.append(f"{v.name}: row {i} sums to {total!r}, beyond tolerance {RENORMALIZE_TOLERANCE}")
                continue
            values[i * k : (i + 1) * k] = [x / total for x in row]
            changed = True
        if changed:
            out = out.with_cpd(v.name, M.TableCpd(tuple(values)))
    if problems:
        raise ModelFileError("probability rows out of tolerance\n" + "\n".join(problems), problems)
    return out


# -- canonical form ----------------------------------------------------------------


def model_to_doc(diagram: M.InfluenceDiagram) -> dict:
    """Plain JSON-ready structure; probabilities rounded to six significant
    digits, everything else at full precision."""
    variables = {}
    for v in diagram.variables:
        spec: dict = {"kind": v.kind}
        if v.owner is not None:
            spec["owner"] = v.owner
        if v.kind != M.UTILITY:
            if isinstance(v.domain, M.DiscreteDomain):
                spec["states"] = [
                    {"label": s.label} if s.value is None else {"label": s.label, "value": s.value}
                    for s in v.domain.states
                ]
            else:
                spec["bounds"] = [v.domain.lower, v.domain.upper]
        if v.parents:
            spec["parents"] = list(v.parents)
        if v.informational_parents:
            spec["informational_parents"] = list(v.informational_parents)
        if isinstance(v.cpd, M.TableCpd):
            if v.kind == M.UTILITY:
                spec["table"] = list(v.cpd.values)
            else:
                spec["table"] = _rounded_rows(v.cpd.values, v.domain.size)
        elif isinstance(v.cpd, M.ExpressionCpd):
            spec["expression"] = v.cpd.source
        if v.bins is not None:
            spec["bins"] = v.bins
        variables[v.name] = spec
    doc: dict = {"variables": variables, "stage_order": list(diagram.stage_order)}
    if diagram.utility_aggregates:
        doc["utility_aggregates"] = {a: list(ps) for a, ps in diagram.utility_aggregates}
    if diagram.overlays:
        doc["overlays"] = {
            owner: {
                name: ({"expression": cpd.source} if isinstance(cpd, M.ExpressionCpd) else {"table": list(cpd.values)})
                for name, cpd in entries
            }
            for owner, entries in diagram.overlays
        }
    if diagram.meta:
        doc["meta"] = dict(diagram.meta)
    return doc


def _rounded_rows(values: tuple[float, ...], k: int) -> list[float]:
    out: list[float] = []
    for i in range(len(values) // k):
        row = values[i * k : (i + 1) * k]
        total = sum(row)
        if total > 0:
            row = [x / total for x in row]
        out.extend(float(format(x, f".{PROBABILITY_DIGITS}g")) for x in row)
    return out


def canonical_json(diagram: M.InfluenceDiagram) -> str:
    return json.dumps(model_to_doc(diagram), sort_keys=True, separators=(",", ":"), allow_nan=False)


def model_hash(diagram: M.InfluenceDiagram) -> str:
    return hashlib.sha256(canonical_json(diagram).encode()).hexdigest()


def save_model(diagram: M.InfluenceDiagram, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_doc(diagram), sort_keys=True, indent=2, allow_nan=False) + "\n")
