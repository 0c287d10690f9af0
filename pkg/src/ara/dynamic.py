"""Dynamic sessions: committing decisions and folding in observations.

A session wraps one discretized game. The belief diagram keeps every decision
at the uniform table; solved policies exist only inside query results, so
conditioning on commitments always behaves like intervention. As play
unfolds:

  * commit: the next pending stage is owned by the defender and gets pinned
    as evidence;
  * observe attack: the next pending stage is the attacker's and its chosen
    state becomes evidence;
  * observe consequence: the attacker's move itself stays hidden, only an
    outcome variable is seen. Every informational arc out of that attacker
    stage is removed (nobody saw the move), the outcome variable becomes an
    informational parent of the following decision, the outcome is pinned as
    evidence, and the hidden stage keeps its uniform table so the evidence
    updates it by plain conditioning.

Every state change is one JSON line in the session log. Replaying the log
through the same code paths reproduces the session exactly; a partial final
line (crash during append) is truncated on recovery.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass
from pathlib import Path

from . import model as M
from .discretize import DEFAULT_BINS, discretize_diagram
from .errors import ModelError, SessionError
from .modelio import load_model, model_hash
from .solver import GameSolution, TiePolicy, TreeNode, backward_induct, build_stage_tree

PENDING = "pending"
COMMITTED = "committed"
OBSERVED = "observed"
CLOSED = "closed"  # attacker stage resolved through a consequence


@dataclass(frozen=True)
class Recommendation:
    stage: str
    owner: str
    config: tuple[tuple[str, str], ...]
    options: tuple[str, ...]
    expected: tuple[float, ...]
    maximizers: tuple[str, ...]
    threshold: float

    @property
    def choice(self) -> str:
        return self.maximizers[0]

    @property
    def value(self) -> float:
        return max(self.expected)


@dataclass(frozen=True)
class WhatIfResult:
    assignments: tuple[tuple[str, str], ...]
    defender_value: float
    attacker_value: float
    recommendation: Recommendation | None


class Session:
    """One evolving game. Construct through open_session or replay_session."""

    def __init__(
        self,
        session_id: str,
        model_name: str,
        base: M.InfluenceDiagram,
        log_path: Path | None,
        bins: int,
        tie: TiePolicy,
    ):
        self.session_id = session_id
        self.model_name = model_name
        self.base = base
        self.hash = model_hash(base)
        self.bins = bins
        self.tie = tie
        self.log_path = log_path
        self.diagram = discretize_diagram(base, default_bins=bins).diagram
        self.evidence: dict[str, str] = {}
        self.order = tuple(n for n, _ in M.stage_order(self.diagram))
        self.status: dict[str, str] = {n: PENDING for n in self.order}
        self.consequences: dict[str, str] = {}  # attacker stage -> outcome variable
        self.seq = 0
        self._solution: GameSolution | None = None

    # -- introspection --

    def pending(self) -> tuple[str, ...]:
        return tuple(n for n in self.order if self.status[n] == PENDING)

    def next_stage(self) -> str | None:
        left = self.pending()
        return left[0] if left else None

    def stage_rows(self) -> list[dict]:
        rows = []
        for name in self.order:
            rows.append(
                {
                    "stage": name,
                    "owner": self.diagram.variable(name).owner,
                    "status": self.status[name],
                    "state": self.evidence.get(name),
                    "outcome": self.consequences.get(name),
                }
            )
        return rows

    # -- event plumbing --

    def _append(self, event: dict) -> None:
        self.seq += 1
        event = {"seq": self.seq, **event}
        if self.log_path is not None:
            with open(self.log_path, "a") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _invalidate(self) -> None:
        self._solution = None

    # -- transitions --

    def commit(self, name: str, state: str, _record: bool = True) -> None:
        nxt = self.next_stage()
        if nxt is None:
            raise SessionError("all stages are resolved")
        if name != nxt:
            raise SessionError(f"cannot commit {name!r}; the next stage is {nxt!r}")
        v = self.diagram.variable(name)
        if v.owner != M.DEFENDER:
            raise SessionError(f"{name} belongs to the attacker; observe it instead of committing")
        assert isinstance(v.domain, M.DiscreteDomain)
        if state not in v.domain.labels:
            raise SessionError(f"{state!r} is not a state of {name}; states are {list(v.domain.labels)}")
        self.evidence[name] = state
        self.status[name] = COMMITTED
        self._invalidate()
        if _record:
            self._append({"event": "commit", "decision": name, "state": state})

    def observe_attack(self, name: str, state: str, _record: bool = True) -> None:
        nxt = self.next_stage()
        if nxt is None:
            raise SessionError("all stages are resolved")
        if name != nxt:
            raise SessionError(f"cannot observe {name!r}; the next stage is {nxt!r}")
        v = self.diagram.variable(name)
        if v.owner != M.ATTACKER:
            raise SessionError(f"{name} belongs to the defender; commit it instead")
        assert isinstance(v.domain, M.DiscreteDomain)
        if state not in v.domain.labels:
            raise SessionError(f"{state!r} is not a state of {name}; states are {list(v.domain.labels)}")
        self.evidence[name] = state
        self.status[name] = OBSERVED
        self._invalidate()
        if _record:
            self._append({"event": "observe_attack", "variable": name, "state": state})

    def observe_consequence(self, name: str, state: str, _record: bool = True) -> None:
        nxt = self.next_stage()
        if nxt is None:
            raise SessionError("all stages are resolved")
        hidden = self.diagram.variable(nxt)
        if hidden.owner != M.ATTACKER:
            raise SessionError(f"the next stage {nxt!r} is the defender's; commit it first")
        v = self.diagram.variable(name)
        if v.kind != M.CHANCE or not isinstance(v.domain, M.DiscreteDomain):
            raise SessionError(f"{name} is not a discrete chance variable")
        if nxt not in v.parents:
            raise SessionError(f"{name} does not depend on the hidden stage {nxt}")
        if name in self.evidence:
            raise SessionError(f"{name} was already observed")
        if state not in v.domain.labels:
            raise SessionError(f"{state!r} is not a state of {name}; states are {list(v.domain.labels)}")

        diagram = self.diagram
        for d in diagram.decisions():
            if nxt in d.informational_parents:
                diagram = diagram.with_informational_parents(
                    d.name, tuple(p for p in d.informational_parents if p != nxt)
                )
        later = [n for n in self.order if self.order.index(n) > self.order.index(nxt)]
        if later:
            follower = later[0]
            parents = diagram.variable(follower).informational_parents
            if name not in parents:
                diagram = diagram.with_informational_parents(follower, parents + (name,))
        # arc changes resized some tables; everything uncommitted goes back to
        # the open-minded uniform, including the hidden attacker stage
        for d in diagram.decisions():
            if d.name not in self.evidence:
                diagram = M.set_decision_uniform(diagram, d.name)
        self.diagram = diagram
        self.evidence[name] = state
        self.status[nxt] = CLOSED
        self.consequences[nxt] = name
        self._invalidate()
        if _record:
            self._append({"event": "observe_consequence", "variable": name, "state": state})

    # -- queries --

    def solve(self) -> GameSolution:
        if self._solution is None:
            self._solution = backward_induct(self.diagram, self.evidence, self.pending(), self.tie)
        return self._solution

    def recommendation(self) -> Recommendation:
        stage = self.next_stage()
        if stage is None:
            raise SessionError("all stages are resolved; nothing to recommend")
        return _recommend(self.solve(), stage, self.evidence)

    def tree(self, stage: str | None = None) -> TreeNode:
        target = stage or self.next_stage()
        if target is None:
            raise SessionError("all stages are resolved")
        if target not in self.pending():
            raise SessionError(f"{target!r} is not a pending stage")
        return build_stage_tree(self.solve().diagram, target, self.evidence, self.tie)

    def what_if(self, assignments: dict[str, str]) -> WhatIfResult:
        pending = self.pending()
        if all(name in pending for name in assignments):
            return self._what_if_stages(assignments, pending)
        return self._what_if_replay(assignments, pending)

    def _what_if_stages(self, assignments: dict[str, str], pending: tuple[str, ...]) -> WhatIfResult:
        for name, state in assignments.items():
            v = self.diagram.variable(name)
            assert isinstance(v.domain, M.DiscreteDomain)
            if state not in v.domain.labels:
                raise SessionError(f"{state!r} is not a state of {name}")
        evidence = {**self.evidence, **assignments}
        remaining = tuple(n for n in pending if n not in assignments)
        solution = backward_induct(self.diagram, evidence, remaining, self.tie)
        recommendation = _recommend(solution, remaining[0], evidence) if remaining else None
        return WhatIfResult(
            assignments=tuple(sorted(assignments.items())),
            defender_value=solution.defender_value,
            attacker_value=solution.attacker_value,
            recommendation=recommendation,
        )

    def _what_if_replay(self, assignments: dict[str, str], pending: tuple[str, ...]) -> WhatIfResult:
        """Preview with hypothetical consequence observations.

        Consequence observations rewrite informational arcs, so they cannot be
        folded in as plain evidence. The preview replays the assignments on a
        throwaway copy of the session through the normal transitions; the real
        session never moves.
        """
        position: dict[str, tuple[int, int]] = {}
        for name in assignments:
            if name in pending:
                position[name] = (self.order.index(name), 0)
                continue
            try:
                v = self.diagram.variable(name)
            except ModelError as exc:
                raise SessionError(str(exc)) from exc
            sources = [
                p
                for p in v.parents
                if p in pending and self.diagram.variable(p).owner == M.ATTACKER
            ]
            if v.kind != M.CHANCE or not sources:
                raise SessionError(f"{name!r} is not a pending stage or the outcome of one")
            position[name] = (self.order.index(sources[0]), 1)

        clone = self._clone()
        for name in sorted(assignments, key=position.__getitem__):
            state = assignments[name]
            if name not in pending:
                clone.observe_consequence(name, state, _record=False)
            elif self.diagram.variable(name).owner == M.DEFENDER:
                clone.commit(name, state, _record=False)
            else:
                clone.observe_attack(name, state, _record=False)
        solution = clone.solve()
        recommendation = clone.recommendation() if clone.next_stage() is not None else None
        return WhatIfResult(
            assignments=tuple(sorted(assignments.items())),
            defender_value=solution.defender_value,
            attacker_value=solution.attacker_value,
            recommendation=recommendation,
        )

    def _clone(self) -> Session:
        """Detached in-memory copy; transitions on it leave this session alone."""
        twin = Session.__new__(Session)
        twin.__dict__.update(self.__dict__)
        twin.log_path = None
        twin.evidence = dict(self.evidence)
        twin.status = dict(self.status)
        twin.consequences = dict(self.consequences)
        return twin


def _recommend(solution: GameSolution, stage: str, evidence: dict[str, str]) -> Recommendation:
    policy = solution.stage(stage)
    missing = [p for p in policy.parents if p not in evidence]
    if missing:
        raise SessionError(f"stage {stage} awaits information on {missing}")
    config = tuple(evidence[p] for p in policy.parents)
    entry = policy.entry_for(config)
    if not entry.reachable or entry.expected is None:
        raise SessionError(f"stage {stage} configuration {config} has probability zero")
    return Recommendation(
        stage=stage,
        owner=policy.owner,
        config=tuple(zip(policy.parents, config)),
        options=policy.options,
        expected=entry.expected,
        maximizers=entry.maximizers,
        threshold=policy.threshold,
    )


# -- construction and replay ----------------------------------------------------------


def open_session(
    model_path: str | Path,
    log_dir: str | Path | None = None,
    session_id: str | None = None,
    bins: int = DEFAULT_BINS,
    tie: TiePolicy = TiePolicy(),
    model_name: str | None = None,
) -> Session:
    model_path = Path(model_path)
    base = load_model(model_path)
    sid = session_id or uuid.uuid4().hex
    name = model_name or model_path.stem
    log_path = None
    if log_dir is not None:
        log_path = Path(log_dir) / f"{sid}.jsonl"
        if log_path.exists():
            raise SessionError(f"session log {log_path} already exists")
        log_path.parent.mkdir(parents=True, exist_ok=True)
    session = Session(sid, name, base, log_path, bins, tie)
    session._append(
        {
            "event": "open",
            "session": sid,
            "model": name,
            "model_hash": session.hash,
            "bins": bins,
            "tie_absolute": tie.absolute,
            "tie_relative": tie.relative,
        }
    )
    return session


def recover_log(log_path: str | Path) -> list[dict]:
    """Parse a session log, truncating a partial trailing line in place."""
    path = Path(log_path)
    raw = path.read_bytes()
    keep = raw
    if raw and not raw.endswith(b"\n"):
        cut = raw.rfind(b"\n")
        keep = raw[: cut + 1] if cut >= 0 else b""
        path.write_bytes(keep)
    events = []
    for i, line in enumerate(keep.splitlines()):
        if not line.strip():
            continue
        try:
            events.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise SessionError(f"{path}: line {i + 1} is corrupt: {exc}") from exc
    return events


def replay_session(log_path: str | Path, models_dir: str | Path) -> Session:
    """Rebuild a session by replaying its log through the normal transitions."""
    log_path = Path(log_path)
    events = recover_log(log_path)
    if not events or events[0].get("event") != "open":
        raise SessionError(f"{log_path}: log must start with an open event")
    head = events[0]
    model_path = Path(models_dir) / f"{head['model']}.json"
    base = load_model(model_path)
    if model_hash(base) != head["model_hash"]:
        raise SessionError(
            f"model {head['model']} changed since the session was opened "
            f"(hash {model_hash(base)[:12]} != {head['model_hash'][:12]})"
        )
    tie = TiePolicy(head.get("tie_absolute", 1e-9), head.get("tie_relative", 1e-6))
    session = Session(head["session"], head["model"], base, log_path, int(head["bins"]), tie)
    session.seq = int(head["seq"])
    for event in events[1:]:
        seq = int(event["seq"])
        if seq != session.seq + 1:
            raise SessionError(f"{log_path}: event sequence jumps from {session.seq} to {seq}")
        kind = event.get("event")
        if kind == "commit":
            session.commit(event["decision"], event["state"], _record=False)
        elif kind == "observe_attack":
            session.observe_attack(event["variable"], event["state"], _record=False)
        elif kind == "observe_consequence":
            session.observe_consequence(event["variable"], event["state"], _record=False)
        else:
            raise SessionError(f"{log_path}: unknown event {kind!r}")
        session.seq = seq
    return session
