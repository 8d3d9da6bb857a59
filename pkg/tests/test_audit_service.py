import json
import threading
import urllib.error
import urllib.request

import pytest

from samhita.audit import AuditStore
from samhita.audit_service import ManualClock, make_server

from test_audit import sample_tasks


@pytest.fixture
def service(tmp_path):
    clock = ManualClock()
    store = AuditStore(tmp_path, clock=clock, lease_seconds=120, required_verdicts=1)
    store.add_tasks(sample_tasks(3))
    server = make_server(store, port=0, manual_clock=clock)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    yield base, clock, store
    server.shutdown()


def get(base, path):
    try:
        with urllib.request.urlopen(base + path) as resp:
            return resp.status, json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read().decode("utf-8"))


def post(base, path, body):
    data = json.dumps(body).encode("utf-8")
    req = urllib.request.Request(
        base + path, data=data, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read().decode("utf-8"))


class TestAuditApi:
    def test_lease_next(self, service):
        base, _, _ = service
        status, body = get(base, "/audit/tasks/next?annotator=ann1")
        assert status == 200
        assert body["task_id"] == "task-000"
        assert body["lease_expires_at"] == 120.0
        assert "passage" in body and "spans" in body

    def test_missing_annotator(self, service):
        base, _, _ = service
        status, body = get(base, "/audit/tasks/next")
        assert status == 400

    def test_verdict_flow_reflected_in_agreement(self, service):
        base, _, _ = service
        _, task = get(base, "/audit/tasks/next?annotator=ann1")
        status, ack = post(
            base,
            f"/audit/tasks/{task['task_id']}/verdict",
            {"annotator_id": "ann1", "label": "Grounded"},
        )
        assert status == 200
        assert ack["done"] is True
        status, agreement = get(base, "/audit/agreement")
        assert status == 200
        counts = agreement["strata"][0]["label_counts"]
        assert counts == {"Grounded": 1}

    def test_lease_expired_conflict(self, service):
        base, clock, _ = service
        _, task = get(base, "/audit/tasks/next?annotator=ann1")
        post(base, "/audit/_clock/advance", {"seconds": 500})
        status, body = post(
            base,
            f"/audit/tasks/{task['task_id']}/verdict",
            {"annotator_id": "ann1", "label": "Grounded"},
        )
        assert status == 409
        assert body["error"] == "lease_expired"

    def test_unknown_task_404(self, service):
        base, _, _ = service
        status, body = post(
            base, "/audit/tasks/ghost/verdict", {"annotator_id": "a", "label": "Grounded"}
        )
        assert status == 404

    def test_invalid_label_400(self, service):
        base, _, _ = service
        _, task = get(base, "/audit/tasks/next?annotator=ann1")
        status, body = post(
            base,
            f"/audit/tasks/{task['task_id']}/verdict",
            {"annotator_id": "ann1", "label": "Nope"},
        )
        assert status == 400

    def test_empty_queue_404(self, service):
        base, _, store = service
        for i in range(3):
            _, task = get(base, f"/audit/tasks/next?annotator=ann{i}")
            post(
                base,
                f"/audit/tasks/{task['task_id']}/verdict",
                {"annotator_id": f"ann{i}", "label": "Grounded"},
            )
        status, body = get(base, "/audit/tasks/next?annotator=late")
        assert status == 404
        assert body["error"] == "no_tasks_available"

    def test_strata_endpoint(self, service):
        base, _, _ = service
        status, body = get(base, "/audit/strata")
        assert status == 200
        assert body["strata"]["escalate|low"]["tasks"] == 3

    def test_concurrent_leases_disjoint(self, service):
        base, _, _ = service
        results = []

        def lease(annotator):
            _, body = get(base, f"/audit/tasks/next?annotator={annotator}")
            results.append(body.get("task_id"))

        threads = [threading.Thread(target=lease, args=(f"ann{i}",)) for i in range(3)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len([r for r in results if r]) == len(set(r for r in results if r))

    def test_cors_headers(self, service):
        base, _, _ = service
        req = urllib.request.Request(base + "/audit/strata")
        with urllib.request.urlopen(req) as resp:
            assert resp.headers["Access-Control-Allow-Origin"] == "*"
