"""HTTP front door for live game sessions.

Solving can take a while on large models, so every state change schedules the
solve on a worker thread and the API reports a per-session status of
``solving``, ``ready`` or ``failed``. Clients poll the session resource and
fetch recommendations or trees once it is ready. All numbers in responses are
nine-significant-digit decimal strings; clients that only display values never
need to parse floats.

Sessions write their event logs under ``logs_dir``. A request for an unknown
session id falls back to replaying ``<logs_dir>/<id>.jsonl``, so a restarted
server picks up where it left off.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import model as M
from .dynamic import Session, open_session, replay_session
from .errors import EngineError, SessionError
from .export import (
    num9,
    recommendation_document,
    render_tree_dot,
    render_tree_text,
    session_document,
    tree_document,
    whatif_document,
)
from .modelio import check_model_text, load_model, model_hash
from .solver import TiePolicy

DEFAULT_BINS = 32
DEFAULT_TIE_EPS = 1e-6

SOLVING = "solving"
READY = "ready"
FAILED = "failed"


class OpenSessionBody(BaseModel):
    model: str
    bins: int | None = Field(default=None, ge=1)
    tie_eps: float | None = Field(default=None, ge=0.0)
    session_id: str | None = None


class CommitBody(BaseModel):
    decision: str
    state: str


class ObserveBody(BaseModel):
    kind: str = Field(pattern="^(attack|consequence)$")
    variable: str
    state: str


class WhatIfBody(BaseModel):
    assignments: dict[str, str]


class ValidateBody(BaseModel):
    text: str


class _Handle:
    """A session plus the bookkeeping that keeps concurrent requests honest."""

    def __init__(self, session: Session):
        self.session = session
        self.lock = threading.Lock()
        self.status = SOLVING
        self.error: str | None = None


class _Hub:
    def __init__(self, models_dir: Path, logs_dir: Path, bins: int, tie: TiePolicy):
        self.models_dir = models_dir
        self.logs_dir = logs_dir
        self.bins = bins
        self.tie = tie
        self.handles: dict[str, _Handle] = {}
        self.pool = ThreadPoolExecutor(max_workers=2, thread_name_prefix="ara-solve")

    def model_path(self, name: str) -> Path:
        if "/" in name or "\\" in name or name.startswith("."):
            raise HTTPException(400, f"invalid model name {name!r}")
        path = self.models_dir / f"{name}.json"
        if not path.exists():
            raise HTTPException(404, f"unknown model {name!r}")
        return path

    def get(self, session_id: str) -> _Handle:
        handle = self.handles.get(session_id)
        if handle is None:
            handle = self._revive(session_id)
        if handle is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return handle

    def _revive(self, session_id: str) -> _Handle | None:
        log = self.logs_dir / f"{session_id}.jsonl"
        if not log.exists():
            return None
        try:
            session = replay_session(log, self.models_dir)
        except EngineError as exc:
            raise HTTPException(500, f"cannot replay session {session_id!r}: {exc}") from exc
        handle = _Handle(session)
        self.handles[session_id] = handle
        self.schedule(handle)
        return handle

    def schedule(self, handle: _Handle) -> None:
        handle.status = SOLVING
        handle.error = None
        self.pool.submit(self._solve, handle)

    def _solve(self, handle: _Handle) -> None:
        try:
            handle.session.solve()
        except Exception as exc:  # surfaced through the status resource
            handle.error = str(exc)
            handle.status = FAILED
        else:
            handle.status = READY

    def ready(self, handle: _Handle) -> None:
        if handle.status == SOLVING:
            raise HTTPException(409, "session is still solving; poll the session resource")
        if handle.status == FAILED:
            raise HTTPException(500, f"solve failed: {handle.error}")


def create_app(
    models_dir: str | Path,
    logs_dir: str | Path | None = None,
    bins: int = DEFAULT_BINS,
    tie_eps: float = DEFAULT_TIE_EPS,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    models_dir = Path(models_dir)
    logs_dir = Path(logs_dir) if logs_dir is not None else models_dir / "sessions"
    hub = _Hub(models_dir, logs_dir, bins, TiePolicy(relative=tie_eps))

    app = FastAPI(title="sequential defend-attack service")
    app.state.hub = hub
    # single-user decision support; the console may be served from anywhere
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    if ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=Path(ui_dir), html=True), name="ui")

    @app.get("/models")
    def list_models() -> list[dict]:
        rows = []
        for path in sorted(models_dir.glob("*.json")):
            try:
                diagram = load_model(path)
            except EngineError as exc:
                rows.append({"name": path.stem, "error": str(exc).splitlines()[0]})
                continue
            rows.append(
                {
                    "name": path.stem,
                    "title": diagram.meta_value("title"),
                    "model_hash": model_hash(diagram),
                    "variables": len(diagram.variables),
                    "stages": [
                        {"stage": n, "owner": owner} for n, owner in M.stage_order(diagram)
                    ],
                }
            )
        return rows

    @app.post("/models/validate")
    def validate_model(body: ValidateBody) -> dict:
        diagram, problems, warnings = check_model_text(body.text)
        out = {"ok": diagram is not None, "problems": problems, "warnings": warnings}
        if diagram is not None:
            out["model_hash"] = model_hash(diagram)
        return out

    @app.post("/sessions", status_code=201)
    def open_new(body: OpenSessionBody) -> dict:
        path = hub.model_path(body.model)
        sid = body.session_id or uuid.uuid4().hex
        if sid in hub.handles or (hub.logs_dir / f"{sid}.jsonl").exists():
            raise HTTPException(409, f"session {sid!r} already exists")
        tie = hub.tie if body.tie_eps is None else TiePolicy(relative=body.tie_eps)
        try:
            session = open_session(
                path,
                log_dir=hub.logs_dir,
                session_id=sid,
                bins=body.bins or hub.bins,
                tie=tie,
            )
        except EngineError as exc:
            raise HTTPException(400, str(exc)) from exc
        handle = _Handle(session)
        hub.handles[sid] = handle
        hub.schedule(handle)
        return session_document(session, status=handle.status)

    @app.get("/sessions")
    def list_sessions() -> list[dict]:
        return [
            {
                "session": sid,
                "model": h.session.model_name,
                "status": h.status,
                "next_stage": h.session.next_stage(),
            }
            for sid, h in sorted(hub.handles.items())
        ]

    @app.get("/sessions/{session_id}")
    def show_session(session_id: str) -> dict:
        handle = hub.get(session_id)
        doc = session_document(handle.session, status=handle.status)
        if handle.status == FAILED:
            doc["error"] = handle.error
        if handle.status == READY:
            solution = handle.session.solve()
            doc["defender_value"] = num9(solution.defender_value)
            doc["attacker_value"] = num9(solution.attacker_value)
        return doc

    def _transition(handle: _Handle, apply) -> dict:
        with handle.lock:
            if handle.status == SOLVING:
                raise HTTPException(409, "session is still solving; retry once it is ready")
            try:
                apply(handle.session)
            except SessionError as exc:
                raise HTTPException(400, str(exc)) from exc
            hub.schedule(handle)
        return session_document(handle.session, status=handle.status)

    @app.post("/sessions/{session_id}/commit")
    def commit(session_id: str, body: CommitBody) -> dict:
        handle = hub.get(session_id)
        return _transition(handle, lambda s: s.commit(body.decision, body.state))

    @app.post("/sessions/{session_id}/observe")
    def observe(session_id: str, body: ObserveBody) -> dict:
        handle = hub.get(session_id)
        if body.kind == "attack":
            return _transition(handle, lambda s: s.observe_attack(body.variable, body.state))
        return _transition(handle, lambda s: s.observe_consequence(body.variable, body.state))

    @app.get("/sessions/{session_id}/recommendation")
    def recommendation(session_id: str) -> dict:
        handle = hub.get(session_id)
        hub.ready(handle)
        try:
            rec = handle.session.recommendation()
        except SessionError as exc:
            raise HTTPException(400, str(exc)) from exc
        return recommendation_document(rec)

    @app.get("/sessions/{session_id}/tree")
    def tree(
        session_id: str,
        stage: str | None = None,
        format: str = Query("json", pattern="^(json|text|dot)$"),
    ):
        handle = hub.get(session_id)
        hub.ready(handle)
        try:
            node = handle.session.tree(stage)
        except SessionError as exc:
            raise HTTPException(400, str(exc)) from exc
        if format == "text":
            return {"stage": node.variable, "text": render_tree_text(node)}
        if format == "dot":
            return {"stage": node.variable, "dot": render_tree_dot(node)}
        return tree_document(node)

    @app.post("/sessions/{session_id}/whatif")
    def what_if(session_id: str, body: WhatIfBody) -> dict:
        handle = hub.get(session_id)
        hub.ready(handle)
        try:
            result = handle.session.what_if(body.assignments)
        except SessionError as exc:
            raise HTTPException(400, str(exc)) from exc
        return whatif_document(result)

    return app
