"""HTTP layer: lifecycle, polling, revival from logs, error statuses.

Every numeric field in a response must be a nine-digit decimal string, so
assertions compare strings. One test pins the session in the solving state
with an event-gated solve to make the 409 paths deterministic.
"""

from __future__ import annotations

import shutil
import threading
import time

import pytest
from fastapi.testclient import TestClient

from ara.dynamic import Session
from ara.modelio import load_model, model_hash
from ara.service import create_app


@pytest.fixture
def env(tmp_path, models_dir):
    models = tmp_path / "models"
    models.mkdir()
    for name in ("da.json", "dad.json"):
        shutil.copy(models_dir / name, models / name)
    logs = tmp_path / "logs"
    return models, logs


@pytest.fixture
def client(env):
    models, logs = env
    with TestClient(create_app(models, logs)) as c:
        yield c


def wait_ready(client: TestClient, sid: str, timeout: float = 30.0) -> dict:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        doc = client.get(f"/sessions/{sid}").json()
        if doc["status"] != "solving":
            return doc
        time.sleep(0.02)
    raise AssertionError(f"session {sid} still solving after {timeout}s")


class TestModelEndpoints:
    def test_models_are_listed_with_hashes(self, client, env):
        models, _ = env
        rows = {r["name"]: r for r in client.get("/models").json()}
        assert set(rows) == {"da", "dad"}
        diagram = load_model(models / "da.json")
        assert rows["da"]["model_hash"] == model_hash(diagram)
        assert rows["da"]["title"] == diagram.meta_value("title")
        assert rows["da"]["variables"] == len(diagram.variables)
        assert rows["da"]["stages"] == [
            {"stage": "D", "owner": "defender"},
            {"stage": "A", "owner": "attacker"},
        ]

    def test_unloadable_model_reported_inline(self, client, env):
        models, _ = env
        (models / "broken.json").write_text("{not json")
        rows = {r["name"]: r for r in client.get("/models").json()}
        assert "error" in rows["broken"]
        assert "model_hash" in rows["da"]

    def test_validate_good_and_bad_text(self, client, env):
        models, _ = env
        good = client.post("/models/validate", json={"text": (models / "da.json").read_text()}).json()
        assert good["ok"] is True
        assert good["problems"] == []
        assert "model_hash" in good
        bad = client.post("/models/validate", json={"text": '{"variables": {}, "stage_order": []}'}).json()
        assert bad["ok"] is False
        assert bad["problems"]
        assert "model_hash" not in bad


class TestHosting:
    def test_cross_origin_requests_allowed(self, client):
        res = client.get("/models", headers={"Origin": "http://localhost:5173"})
        assert res.headers["access-control-allow-origin"] == "*"

    def test_console_bundle_mounted_when_given(self, env, tmp_path):
        models, logs = env
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<!doctype html><title>console</title>")
        with TestClient(create_app(models, logs, ui_dir=ui)) as c:
            assert "console" in c.get("/ui/").text
        with TestClient(create_app(models, logs)) as c:
            assert c.get("/ui/").status_code == 404


class TestSessionLifecycle:
    def test_open_poll_query_play(self, client):
        doc = client.post("/sessions", json={"model": "da", "session_id": "s1"})
        assert doc.status_code == 201
        body = doc.json()
        assert body["session"] == "s1"
        assert body["model"] == "da"
        assert body["status"] in ("solving", "ready")

        ready = wait_ready(client, "s1")
        assert ready["status"] == "ready"
        assert ready["defender_value"] == "-100"
        assert ready["attacker_value"] == "0"
        assert ready["next_stage"] == "D"

        rec = client.get("/sessions/s1/recommendation").json()
        assert rec["choice"] == "Yes"
        assert rec["expected"] == ["-100", "-160"]
        assert all(isinstance(x, str) for x in rec["expected"])

        text = client.get("/sessions/s1/tree", params={"format": "text"}).json()
        assert text["stage"] == "D"
        assert "D=Yes *" in text["text"]

        whatif = client.post("/sessions/s1/whatif", json={"assignments": {"D": "No"}}).json()
        assert whatif["defender_value"] == "-160"
        assert whatif["recommendation"]["choice"] == "Yes"

        committed = client.post("/sessions/s1/commit", json={"decision": "D", "state": "No"})
        assert committed.status_code == 200
        assert committed.json()["evidence"] == {"D": "No"}
        ready = wait_ready(client, "s1")
        assert ready["defender_value"] == "-160"
        rec = client.get("/sessions/s1/recommendation").json()
        assert (rec["stage"], rec["choice"]) == ("A", "Yes")

        observed = client.post(
            "/sessions/s1/observe", json={"kind": "attack", "variable": "A", "state": "Yes"}
        )
        assert observed.status_code == 200
        ready = wait_ready(client, "s1")
        assert ready["next_stage"] is None
        assert ready["defender_value"] == "-160"
        assert client.get("/sessions/s1/recommendation").status_code == 400

    def test_consequence_observation_over_http(self, client):
        client.post("/sessions", json={"model": "da", "session_id": "c1"})
        wait_ready(client, "c1")
        client.post("/sessions/c1/commit", json={"decision": "D", "state": "No"})
        wait_ready(client, "c1")
        doc = client.post(
            "/sessions/c1/observe", json={"kind": "consequence", "variable": "S", "state": "True"}
        )
        assert doc.status_code == 200
        rows = {r["stage"]: r for r in doc.json()["stages"]}
        assert rows["A"]["status"] == "closed"
        assert rows["A"]["outcome"] == "S"
        ready = wait_ready(client, "c1")
        assert ready["defender_value"] == "-200"

    def test_consequence_whatif_previews_without_moving(self, client):
        client.post("/sessions", json={"model": "da", "session_id": "w1"})
        wait_ready(client, "w1")
        client.post("/sessions/w1/commit", json={"decision": "D", "state": "No"})
        wait_ready(client, "w1")
        hit = client.post("/sessions/w1/whatif", json={"assignments": {"S": "True"}})
        miss = client.post("/sessions/w1/whatif", json={"assignments": {"S": "False"}})
        assert hit.status_code == 200 and miss.status_code == 200
        assert hit.json()["defender_value"] == "-200"
        assert miss.json()["defender_value"] == "0"
        doc = client.get("/sessions/w1").json()
        assert doc["next_stage"] == "A"
        assert doc["evidence"] == {"D": "No"}

    def test_session_listing(self, client):
        client.post("/sessions", json={"model": "da", "session_id": "a"})
        client.post("/sessions", json={"model": "dad", "session_id": "b"})
        wait_ready(client, "a")
        wait_ready(client, "b")
        rows = client.get("/sessions").json()
        assert [r["session"] for r in rows] == ["a", "b"]
        assert {r["model"] for r in rows} == {"da", "dad"}

    def test_custom_bins_and_tie_are_recorded(self, client):
        doc = client.post(
            "/sessions", json={"model": "da", "session_id": "cfg", "bins": 8, "tie_eps": 0.001}
        ).json()
        assert doc["bins"] == 8
        assert doc["tie"]["relative"] == "0.001"


class TestErrorPaths:
    def test_unknown_model_and_session(self, client):
        assert client.post("/sessions", json={"model": "ghost"}).status_code == 404
        assert client.get("/sessions/ghost").status_code == 404

    def test_path_traversal_names_rejected(self, client):
        assert client.post("/sessions", json={"model": "../da"}).status_code == 400
        assert client.post("/sessions", json={"model": ".hidden"}).status_code == 400

    def test_duplicate_session_id_rejected(self, client):
        assert client.post("/sessions", json={"model": "da", "session_id": "dup"}).status_code == 201
        assert client.post("/sessions", json={"model": "da", "session_id": "dup"}).status_code == 409

    def test_invalid_transitions_are_400(self, client):
        client.post("/sessions", json={"model": "da", "session_id": "err"})
        wait_ready(client, "err")
        out = client.post("/sessions/err/commit", json={"decision": "D", "state": "Sideways"})
        assert out.status_code == 400
        assert "not a state" in out.json()["detail"]
        out = client.post("/sessions/err/observe", json={"kind": "attack", "variable": "A", "state": "Yes"})
        assert out.status_code == 400

    def test_malformed_bodies_are_422(self, client):
        assert client.post("/sessions", json={"model": "da", "bins": 0}).status_code == 422
        assert (
            client.post("/sessions/x/observe", json={"kind": "guess", "variable": "A", "state": "Yes"}).status_code
            == 422
        )
        client.post("/sessions", json={"model": "da", "session_id": "fmt"})
        wait_ready(client, "fmt")
        assert client.get("/sessions/fmt/tree", params={"format": "png"}).status_code == 422

    def test_queries_conflict_while_solving(self, env, monkeypatch):
        models, logs = env
        gate = threading.Event()
        real = Session.solve

        def gated(self):
            gate.wait(timeout=10)
            return real(self)

        monkeypatch.setattr(Session, "solve", gated)
        with TestClient(create_app(models, logs)) as client:
            doc = client.post("/sessions", json={"model": "da", "session_id": "slow"}).json()
            assert doc["status"] == "solving"
            assert client.get("/sessions/slow/recommendation").status_code == 409
            assert client.get("/sessions/slow/tree").status_code == 409
            assert client.post("/sessions/slow/whatif", json={"assignments": {}}).status_code == 409
            assert (
                client.post("/sessions/slow/commit", json={"decision": "D", "state": "No"}).status_code == 409
            )
            gate.set()
            assert wait_ready(client, "slow")["status"] == "ready"


class TestRevival:
    def test_restarted_service_replays_logs(self, env):
        models, logs = env
        with TestClient(create_app(models, logs)) as first:
            first.post("/sessions", json={"model": "da", "session_id": "keep"})
            wait_ready(first, "keep")
            first.post("/sessions/keep/commit", json={"decision": "D", "state": "No"})
            wait_ready(first, "keep")

        with TestClient(create_app(models, logs)) as second:
            doc = wait_ready(second, "keep")
            assert doc["evidence"] == {"D": "No"}
            assert doc["seq"] == 2
            assert doc["defender_value"] == "-160"
            rec = second.get("/sessions/keep/recommendation").json()
            assert (rec["stage"], rec["choice"]) == ("A", "Yes")

    def test_revival_with_changed_model_is_500(self, env):
        models, logs = env
        with TestClient(create_app(models, logs)) as first:
            first.post("/sessions", json={"model": "da", "session_id": "stale"})
            wait_ready(first, "stale")
        text = (models / "da.json").read_text()
        (models / "da.json").write_text(text.replace("-300.0", "-301.0"))
        with TestClient(create_app(models, logs)) as second:
            out = second.get("/sessions/stale")
            assert out.status_code == 500
            assert "cannot replay" in out.json()["detail"]
