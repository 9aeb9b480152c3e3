"""HTTP surface of the CNC: stats, device listing, submissions, admin
controls, and a server-push snapshot stream for the dashboard.

The simulation engine runs on its own thread and owns all mutable state.
API handlers never touch the engine directly: requests are serialized onto
the engine thread through an inbox queue and answered over per-request
reply queues, so the CNC stays a single logical actor.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from typing import Callable, List, Optional

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import PlainTextResponse, Response, StreamingResponse

from .cnc import SubmissionError, UnknownDeviceError, Verdict
from .domain import Credentials
from .engine import Engine
from .protocol import SHUTDOWN_ALL, SubmissionMsg, release_device

logger = logging.getLogger(__name__)

BEST_PRACTICES = """\
Practical steps for keeping an IoT device out of botnets:

1. Change every factory credential before the device first goes online.
2. Apply vendor firmware updates promptly; subscribe to advisories.
3. Disable remote administration interfaces you do not use.
4. Put IoT devices on an isolated network segment.
5. Reboot is not a fix: reinfection takes minutes while credentials stay weak.
"""


class ServiceStopped(Exception):
    pass


class SimulationService:
    """Owns the engine thread; everything else talks to it via messages."""

    def __init__(self, engine: Engine, time_dilation: float = 0.1):
        self.engine = engine
        self.time_dilation = time_dilation
        self._inbox: "queue.Queue" = queue.Queue()
        self._subscribers: List[queue.Queue] = []
        self._subscribers_lock = threading.Lock()
        self._latest = engine.snapshot(0.0)
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        engine.on_sample = self._publish

    @property
    def stopped(self) -> bool:
        return self._stop.is_set()

    # -- engine thread --------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run_loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def _run_loop(self) -> None:
        engine = self.engine
        horizon = engine.config.horizon
        wall_start = time.monotonic()
        while not self._stop.is_set():
            self._drain_inbox()
            next_at = engine.peek_next_at()
            if next_at is None or next_at > horizon + 1e-9:
                self._stop.wait(0.02)
                continue
            target = wall_start + next_at * self.time_dilation
            now = time.monotonic()
            if now < target:
                self._stop.wait(min(target - now, 0.02))
                continue
            engine.process_one()

    def _drain_inbox(self) -> None:
        while True:
            try:
                fn, reply = self._inbox.get_nowait()
            except queue.Empty:
                return
            try:
                reply.put(("ok", fn()))
            except Exception as exc:  # handler errors travel back to the caller
                reply.put(("err", exc))

    def _call(self, fn: Callable):
        if self._thread is None or not self._thread.is_alive():
            raise ServiceStopped("engine thread is not running")
        reply: "queue.Queue" = queue.Queue(1)
        self._inbox.put((fn, reply))
        status, value = reply.get(timeout=10)
        if status == "err":
            raise value
        return value

    # -- snapshot stream --------------------------------------------------------

    def _publish(self, snapshot) -> None:
        self._latest = snapshot
        payload = json.dumps(snapshot.to_json_obj())
        with self._subscribers_lock:
            for q in self._subscribers:
                try:
                    q.put_nowait(payload)
                except queue.Full:
                    pass  # slow consumer: drop, the next tick supersedes

    def subscribe(self) -> queue.Queue:
        q: "queue.Queue" = queue.Queue(maxsize=256)
        with self._subscribers_lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._subscribers_lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    # -- queries & commands (all run on the engine thread) ------------------------

    def latest_stats(self) -> dict:
        return self._latest.to_json_obj()

    def stats_history(self, since: Optional[float], until: Optional[float]) -> list:
        def fn():
            out = []
            for snap in self.engine.cnc.stats_history:
                t = snap.sim_time_us / 1e6
                if since is not None and t < since:
                    continue
                if until is not None and t > until:
                    continue
                out.append(snap.to_json_obj())
            return out

        return self._call(fn)

    def device_rows(self) -> list:
        def fn():
            engine = self.engine
            rows = []
            for device in engine.devices:
                rec = engine.cnc.known_devices.get(device.id)
                rows.append(
                    {
                        "id": device.id,
                        "state": device.state.short(),
                        "up": device.up,
                        "bot_status": rec.bot_status if rec else "none",
                        "last_seen": rec.last_keepalive if rec else None,
                        "released": device.id in engine.cnc.released,
                    }
                )
            return rows

        return self._call(fn)

    def submit(self, submitter: str, batch: List[Credentials]) -> dict:
        def fn():
            sub_id = self.engine.cnc.submit(
                SubmissionMsg(tuple(batch), submitter), self.engine.now
            )
            return {"id": sub_id, "status": "pending"}

        return self._call(fn)

    def list_submissions(self) -> list:
        def fn():
            return [
                {
                    "id": s["id"],
                    "submitter": s["msg"].submitter,
                    "credentials": [
                        {"username": c.username, "password": c.password}
                        for c in s["msg"].credentials_batch
                    ],
                    "status": s["status"],
                }
                for s in self.engine.cnc.submissions
            ]

        return self._call(fn)

    def review(self, sub_id: int, verdict: Verdict) -> dict:
        def fn():
            added = self.engine.cnc.review_submission(sub_id, verdict, self.engine.now)
            return {
                "id": sub_id,
                "status": self.engine.cnc.submissions[sub_id]["status"],
                "credentials_added": added,
            }

        return self._call(fn)

    def shutdown_botnet(self) -> dict:
        def fn():
            self.engine.schedule_admin(SHUTDOWN_ALL, self.engine.now)
            return {"shutdown": True}

        return self._call(fn)

    def release(self, device_id: int) -> dict:
        def fn():
            if (
                self.engine.cnc.valid_ids is not None
                and device_id not in self.engine.cnc.valid_ids
            ):
                raise UnknownDeviceError(f"no such device: {device_id}")
            self.engine.schedule_admin(release_device(device_id), self.engine.now)
            return {"released": device_id}

        return self._call(fn)


def create_app(
    service: SimulationService,
    admin_token: Optional[str],
    assets_dir: Optional[str] = None,
    sse_keepalive: float = 15.0,
) -> FastAPI:
    app = FastAPI(title="white-worm CNC", docs_url=None, redoc_url=None)

    def require_admin(request: Request) -> None:
        header = request.headers.get("authorization")
        if admin_token is None or header != f"Bearer {admin_token}":
            raise HTTPException(status_code=401, detail="admin token required")

    def fixed_json(obj) -> Response:
        # json.dumps preserves insertion order; key order is part of the API.
        return Response(content=json.dumps(obj), media_type="application/json")

    @app.get("/api/stats")
    def get_stats():
        return fixed_json(service.latest_stats())

    @app.get("/api/stats/history")
    def get_history(
        since: Optional[float] = Query(None, alias="from"),
        until: Optional[float] = Query(None, alias="to"),
    ):
        return fixed_json(service.stats_history(since, until))

    @app.get("/api/devices")
    def get_devices():
        return fixed_json(service.device_rows())

    @app.post("/api/submissions")
    def post_submission(body: dict):
        submitter = body.get("submitter", "anonymous")
        raw = body.get("credentials", [])
        if not raw:
            raise HTTPException(status_code=400, detail="empty credential batch")
        try:
            batch = [Credentials(c["username"], c["password"]) for c in raw]
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=f"invalid credentials: {exc}")
        return fixed_json(service.submit(str(submitter), batch))

    @app.get("/api/submissions", dependencies=[Depends(require_admin)])
    def get_submissions():
        return fixed_json(service.list_submissions())

    @app.post("/api/submissions/{sub_id}/review", dependencies=[Depends(require_admin)])
    def post_review(sub_id: int, body: dict):
        verdict_raw = str(body.get("verdict", "")).lower()
        if verdict_raw not in ("accept", "reject"):
            raise HTTPException(status_code=400, detail="verdict must be accept or reject")
        verdict = Verdict.ACCEPT if verdict_raw == "accept" else Verdict.REJECT
        try:
            return fixed_json(service.review(sub_id, verdict))
        except SubmissionError as exc:
            raise HTTPException(
                status_code=409 if exc.already_reviewed else 404, detail=str(exc)
            )

    @app.post("/api/admin/shutdown", dependencies=[Depends(require_admin)])
    def post_shutdown():
        return fixed_json(service.shutdown_botnet())

    @app.post("/api/admin/release", dependencies=[Depends(require_admin)])
    def post_release(body: dict):
        if "device_id" not in body:
            raise HTTPException(status_code=400, detail="device_id required")
        try:
            return fixed_json(service.release(int(body["device_id"])))
        except UnknownDeviceError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/api/events/stream")
    def events_stream():
        q = service.subscribe()

        def gen():
            try:
                # Prime the stream so new clients render without waiting a tick.
                yield f"data: {json.dumps(service.latest_stats())}\n\n"
                while not service.stopped:
                    try:
                        payload = q.get(timeout=sse_keepalive)
                        yield f"data: {payload}\n\n"
                    except queue.Empty:
                        yield ": keepalive\n\n"
            finally:
                service.unsubscribe(q)

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.get("/api/best-practices", response_class=PlainTextResponse)
    def best_practices():
        return BEST_PRACTICES

    if assets_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=assets_dir, html=True), name="dashboard")

    return app
