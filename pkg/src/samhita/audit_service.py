"""HTTP JSON API over the audit store.

Endpoints (all JSON):
  GET  /audit/tasks/next?annotator=<id>   lease the next open task
  POST /audit/tasks/<task_id>/verdict     body {annotator_id, label, note?}
  GET  /audit/agreement                   per-stratum agreement report
  GET  /audit/strata                      stratum task/verdict summary
  POST /audit/_clock/advance              body {seconds}; test clock only

Responses carry server_time so browser clients can render lease countdowns
without trusting their local clock. CORS is wide open: the review UI is a
static page served from anywhere.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .audit import AuditStore
from .errors import InvalidLabel, LeaseExpired, UnknownTask

_VERDICT_PATH_RE = re.compile(r"^/audit/tasks/(?P<task_id>[^/]+)/verdict$")


class ManualClock:
    """Advance-only clock for deterministic lease-expiry tests."""

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()

    def __call__(self) -> float:
        with self._lock:
            return self._now

    def advance(self, seconds: float) -> float:
        with self._lock:
            self._now += seconds
            return self._now


def _task_view(task, lease_expires_at: float, now: float) -> dict:
    return {
        "task_id": task.task_id,
        "item_id": task.item_id,
        "stratum_key": task.stratum_key,
        "question": task.payload.get("question", ""),
        "answer": task.payload.get("answer", ""),
        "passage": task.payload.get("passage", ""),
        "spans": task.payload.get("spans", []),
        "lease_expires_at": lease_expires_at,
        "server_time": now,
    }


class AuditApiHandler(BaseHTTPRequestHandler):
    server_version = "samhita-audit/0.1"
    store: AuditStore
    manual_clock: ManualClock | None = None

    # quiet by default; tests and the CLI decide about logging
    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        if length == 0:
            return {}
        return json.loads(self.rfile.read(length).decode("utf-8"))

    def do_OPTIONS(self):  # noqa: N802 - stdlib naming
        self._send(204, {})

    def do_GET(self):  # noqa: N802
        url = urlparse(self.path)
        if url.path == "/audit/tasks/next":
            params = parse_qs(url.query)
            annotator = params.get("annotator", [""])[0]
            if not annotator:
                self._send(400, {"error": "missing_annotator"})
                return
            leased = self.store.lease_next(annotator)
            if leased is None:
                self._send(404, {"error": "no_tasks_available"})
                return
            task, expires_at = leased
            self._send(200, _task_view(task, expires_at, self.store.clock()))
        elif url.path == "/audit/agreement":
            report = [s.to_record() for s in self.store.agreement()]
            self._send(200, {"strata": report, "server_time": self.store.clock()})
        elif url.path == "/audit/strata":
            self._send(200, {"strata": self.store.strata_summary(), "server_time": self.store.clock()})
        else:
            self._send(404, {"error": "not_found"})

    def do_POST(self):  # noqa: N802
        url = urlparse(self.path)
        m = _VERDICT_PATH_RE.match(url.path)
        if m:
            try:
                body = self._read_json()
            except json.JSONDecodeError:
                self._send(400, {"error": "invalid_json"})
                return
            try:
                ack = self.store.submit_verdict(
                    task_id=m.group("task_id"),
                    annotator_id=str(body.get("annotator_id", "")),
                    label=str(body.get("label", "")),
                    note=body.get("note"),
                )
            except UnknownTask:
                self._send(404, {"error": "unknown_task"})
                return
            except InvalidLabel:
                self._send(400, {"error": "invalid_label"})
                return
            except LeaseExpired:
                self._send(409, {"error": "lease_expired"})
                return
            ack["server_time"] = self.store.clock()
            self._send(200, ack)
        elif url.path == "/audit/_clock/advance" and self.manual_clock is not None:
            try:
                body = self._read_json()
            except json.JSONDecodeError:
                self._send(400, {"error": "invalid_json"})
                return
            now = self.manual_clock.advance(float(body.get("seconds", 0)))
            self._send(200, {"server_time": now})
        else:
            self._send(404, {"error": "not_found"})


def make_server(
    store: AuditStore,
    host: str = "127.0.0.1",
    port: int = 0,
    manual_clock: ManualClock | None = None,
) -> ThreadingHTTPServer:
    handler = type(
        "BoundAuditApiHandler",
        (AuditApiHandler,),
        {"store": store, "manual_clock": manual_clock},
    )
    return ThreadingHTTPServer((host, port), handler)
