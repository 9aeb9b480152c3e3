import json
import time

import pytest
from fastapi.testclient import TestClient

from antibiotic.api import SimulationService, create_app
from antibiotic.engine import Engine, SimConfig
from antibiotic.scenarios import DEFAULT_DICTIONARY

TOKEN = "test-admin-token"
AUTH = {"Authorization": f"Bearer {TOKEN}"}


def service_config(**overrides):
    params = dict(
        n_devices=3,
        seed=0,
        horizon=500.0,
        weak_credential_dictionary=DEFAULT_DICTIONARY,
        capability_mix=(0.0, 0.0, 0.0),  # guard bots stay live
        owner_responsiveness=0.0,
        reboot_rate=None,
        white_scan_rate=0.2,
        owner_window=30.0,
        metrics_interval=5.0,
    )
    params.update(overrides)
    return SimConfig(**params)


@pytest.fixture()
def client():
    engine = Engine(service_config())
    service = SimulationService(engine, time_dilation=0.0005)
    app = create_app(service, TOKEN, sse_keepalive=0.1)
    service.start()
    try:
        with TestClient(app) as tc:
            tc.service = service
            yield tc
    finally:
        service.stop()


def wait_for(client, predicate, timeout=10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        stats = client.get("/api/stats").json()
        if predicate(stats):
            return stats
        time.sleep(0.02)
    raise AssertionError("condition not reached before timeout")


class TestStats:
    def test_counts_sum_to_population(self, client):
        stats = client.get("/api/stats").json()
        total = (
            stats["vulnerable"]
            + stats["infected_black"]
            + stats["infected_white"]
            + stats["secured_temp"]
            + stats["secured_perm"]
        )
        assert total == 3

    def test_fixed_key_order_on_the_wire(self, client):
        raw = client.get("/api/stats").text
        assert raw.startswith('{"sim_time":')
        keys = list(json.loads(raw))
        assert keys == [
            "sim_time", "vulnerable", "infected_black", "infected_white",
            "secured_temp", "secured_perm", "live_bots",
        ]

    def test_history_accumulates_and_filters(self, client):
        wait_for(client, lambda s: s["sim_time"] >= 20)
        history = client.get("/api/stats/history").json()
        assert len(history) >= 3
        bounded = client.get("/api/stats/history?from=5&to=15").json()
        assert bounded
        assert all(5 <= h["sim_time"] <= 15 for h in bounded)

    def test_devices_listing(self, client):
        wait_for(client, lambda s: s["live_bots"] >= 1)
        rows = client.get("/api/devices").json()
        assert len(rows) == 3
        assert {r["id"] for r in rows} == {0, 1, 2}
        assert any(r["bot_status"] == "live" for r in rows)


class TestAuth:
    @pytest.mark.parametrize(
        "method,path,body",
        [
            ("get", "/api/submissions", None),
            ("post", "/api/admin/shutdown", {}),
            ("post", "/api/admin/release", {"device_id": 0}),
            ("post", "/api/submissions/0/review", {"verdict": "accept"}),
        ],
    )
    def test_admin_endpoints_require_token(self, client, method, path, body):
        call = getattr(client, method)
        resp = call(path, json=body) if body is not None else call(path)
        assert resp.status_code == 401

    def test_wrong_token_rejected(self, client):
        resp = client.post(
            "/api/admin/shutdown", headers={"Authorization": "Bearer wrong"}
        )
        assert resp.status_code == 401


class TestSubmissions:
    def test_submit_review_flow(self, client):
        resp = client.post(
            "/api/submissions",
            json={
                "submitter": "tester",
                "credentials": [{"username": "new", "password": "pw"}],
            },
        )
        assert resp.status_code == 200
        sub_id = resp.json()["id"]

        listing = client.get("/api/submissions", headers=AUTH).json()
        assert listing[sub_id]["status"] == "pending"

        review = client.post(
            f"/api/submissions/{sub_id}/review", json={"verdict": "accept"}, headers=AUTH
        )
        assert review.status_code == 200
        assert review.json()["status"] == "accepted"
        assert review.json()["credentials_added"] == 1

        again = client.post(
            f"/api/submissions/{sub_id}/review", json={"verdict": "reject"}, headers=AUTH
        )
        assert again.status_code == 409

    def test_unknown_submission_404(self, client):
        resp = client.post(
            "/api/submissions/99/review", json={"verdict": "accept"}, headers=AUTH
        )
        assert resp.status_code == 404

    def test_empty_batch_rejected(self, client):
        resp = client.post("/api/submissions", json={"credentials": []})
        assert resp.status_code == 400

    def test_oversized_credential_rejected(self, client):
        resp = client.post(
            "/api/submissions",
            json={"credentials": [{"username": "u", "password": "x" * 65}]},
        )
        assert resp.status_code == 400


class TestAdminActions:
    def test_shutdown_drives_live_bots_to_zero(self, client):
        wait_for(client, lambda s: s["live_bots"] >= 2)
        resp = client.post("/api/admin/shutdown", headers=AUTH)
        assert resp.status_code == 200
        stats = wait_for(client, lambda s: s["live_bots"] == 0)
        assert stats["live_bots"] == 0

    def test_release_unknown_device_404(self, client):
        resp = client.post("/api/admin/release", json={"device_id": 99}, headers=AUTH)
        assert resp.status_code == 404

    def test_release_known_device(self, client):
        resp = client.post("/api/admin/release", json={"device_id": 1}, headers=AUTH)
        assert resp.status_code == 200
        deadline = time.monotonic() + 10
        while time.monotonic() < deadline:
            rows = client.get("/api/devices").json()
            if rows[1]["released"]:
                return
            time.sleep(0.02)
        raise AssertionError("release not reflected in device listing")


class TestEventStream:
    def test_stream_delivers_snapshots(self):
        """The in-process test client buffers bodies, so this one runs over a
        real socket."""
        import httpx

        from serveutil import LiveServer

        engine = Engine(service_config())
        service = SimulationService(engine, time_dilation=0.0005)
        app = create_app(service, TOKEN, sse_keepalive=0.1)
        service.start()
        got = []
        try:
            with LiveServer(app) as server:
                with httpx.Client(base_url=server.base_url, timeout=10.0) as http:
                    with http.stream("GET", "/api/events/stream") as resp:
                        assert resp.status_code == 200
                        assert resp.headers["content-type"].startswith("text/event-stream")
                        for line in resp.iter_lines():
                            if line.startswith("data: "):
                                got.append(json.loads(line[len("data: "):]))
                                if len(got) >= 3:
                                    break
                service.stop()
        finally:
            service.stop()
        assert all(
            set(snap) >= {"sim_time", "vulnerable", "live_bots"} for snap in got
        )
        # Ticks advance simulated time.
        assert got[-1]["sim_time"] >= got[0]["sim_time"]


class TestBestPractices:
    def test_placeholder_document(self, client):
        resp = client.get("/api/best-practices")
        assert resp.status_code == 200
        assert "credential" in resp.text
