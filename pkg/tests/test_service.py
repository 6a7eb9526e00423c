"""HTTP surface: endpoints, versions, conflicts, jobs, events."""

import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from ladder.gateway import MockBackend, TemplateStore
from ladder.service import create_app


def wait_job(client, sid, jid, timeout=10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        job = client.get(f"/sessions/{sid}/jobs/{jid}").json()
        if job["status"] != "running":
            return job
        time.sleep(0.01)
    raise AssertionError("job did not finish")


@pytest.fixture
def client():
    app = create_app(backend_factory=lambda: MockBackend(
        default_responses={
            "propagate_changes": "unchanged",
            "supplement_merge": "unchanged",
        }))
    with TestClient(app) as c:
        yield c


def make_session(client, sid="s1"):
    reply = client.post("/sessions", json={"session_id": sid})
    assert reply.status_code == 200
    return reply.json()


def test_health(client):
    assert client.get("/health").json()["status"] == "ok"


def test_add_block_then_get_tree_bumps_version(client):
    make_session(client)
    reply = client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "child", "prompt": "Load data"})
    body = reply.json()
    assert body["tree_version"] == 1
    tree = client.get("/sessions/s1/tree").json()
    assert tree["tree_version"] == 1
    assert any(n["prompt"] == "Load data" for n in tree["nodes"])


def test_unknown_session_404(client):
    reply = client.get("/sessions/nope/tree")
    assert reply.status_code == 404
    assert reply.json()["code"] == "not_found"


def test_engine_error_maps_to_structured_body(client):
    make_session(client)
    reply = client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "sibling", "prompt": "x"})
    assert reply.status_code == 400
    assert reply.json()["code"] == "invalid_relation"


def test_concurrent_edits_same_expected_version_conflict(client):
    make_session(client)
    added = client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "child", "prompt": "a"}).json()
    bid = added["id"]
    expected = added["tree_version"]

    replies = []
    barrier = threading.Barrier(2)

    def edit(text):
        barrier.wait()
        replies.append(client.patch(f"/sessions/s1/blocks/{bid}", json={
            "prompt": text, "expected_version": expected}))

    threads = [threading.Thread(target=edit, args=(t,)) for t in ("x", "y")]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    codes = sorted(r.status_code for r in replies)
    assert codes == [200, 409]
    conflict = next(r for r in replies if r.status_code == 409)
    assert conflict.json()["code"] == "conflict"


def test_supplement_badge_and_fold(client):
    make_session(client)
    bid = client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "child", "prompt": "Train model"}).json()["id"]
    reply = client.post(f"/sessions/s1/blocks/{bid}/supplements",
                        json={"text": "use L2 regularization"}).json()
    assert reply["badge_count"] == 1
    assert reply["receipt"]["kind"] == "supplement"
    fold = client.post(f"/sessions/s1/blocks/{bid}/fold", json={"folded": True})
    assert fold.status_code == 200


def test_generate_job_pure_code_block(client):
    make_session(client)
    bid = client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "child",
        "prompt": "for epoch in range(1, 31):"}).json()["id"]
    jid = client.post(f"/sessions/s1/blocks/{bid}/generate").json()["job_id"]
    job = wait_job(client, "s1", jid)
    assert job["status"] == "done"
    doc = client.get("/sessions/s1/document").json()
    assert doc["text"].startswith("for epoch in range(1, 31):")


def test_propagate_job_emits_plan_length_step_events(client):
    make_session(client)
    parent = client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "child", "prompt": "parent"}).json()["id"]
    for prompt in ("child one", "child two"):
        client.post("/sessions/s1/blocks", json={
            "anchor": parent, "relation": "child", "prompt": prompt})
    receipt = client.patch(f"/sessions/s1/blocks/{parent}", json={
        "prompt": "parent edited"}).json()["receipt"]
    jid = client.post("/sessions/s1/propagate",
                      json={"receipt": receipt}).json()["job_id"]
    job = wait_job(client, "s1", jid)
    assert job["status"] == "done"
    steps = [e for e in job["events"] if e["type"] == "job.step"]
    assert len(steps) == len(job["result"]["plan"]) == 3
    assert [s["step"]["reason"] for s in steps] == [
        "edited", "descendant", "descendant"]


def test_event_stream_delivers_job_events(client):
    make_session(client)
    bid = client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "child", "prompt": "x = 1"}).json()["id"]

    events = []

    def consume():
        with client.stream(
                "GET", "/sessions/s1/events?limit=2&timeout=5") as reply:
            for line in reply.iter_lines():
                if line.startswith("data: "):
                    events.append(json.loads(line[6:]))

    consumer = threading.Thread(target=consume)
    consumer.start()
    time.sleep(0.2)
    jid = client.post(f"/sessions/s1/blocks/{bid}/generate").json()["job_id"]
    consumer.join(timeout=5)
    assert not consumer.is_alive()
    assert [e["type"] for e in events] == ["job.started", "job.finished"]
    assert events[0]["job"] == jid


def test_document_slice_and_code_edit(client):
    make_session(client)
    a = client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "child", "prompt": "a"}).json()["id"]
    b = client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "child", "prompt": "b"}).json()["id"]
    for bid, code in ((a, "a = 1"), (b, "b = 2")):
        jid = client.post(f"/sessions/s1/blocks/{bid}/generate",
                          json={}).json()["job_id"]
        job = wait_job(client, "s1", jid)
        assert job["status"] == "failed"  # NL prompt, no fixture
    # write code directly instead: code edits route through the document
    client.patch(f"/sessions/s1/blocks/{a}", json={"prompt": "a = 1"})
    client.patch(f"/sessions/s1/blocks/{b}", json={"prompt": "b = 2"})
    for bid in (a, b):
        jid = client.post(f"/sessions/s1/blocks/{bid}/generate").json()["job_id"]
        assert wait_job(client, "s1", jid)["status"] == "done"

    view = client.get(f"/sessions/s1/document/slice?selected={b}").json()
    assert [f["block"] for f in view["folded"]] == [a]

    edited = client.post("/sessions/s1/document/edit", json={
        "first_line": 2, "last_line": 2, "text": "b = 20"})
    assert edited.json()["block"] == b
    doc = client.get("/sessions/s1/document").json()
    assert "b = 20" in doc["text"]


def test_spans_links_revisions_diff_endpoints(client):
    make_session(client)
    bid = client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "child",
        "prompt": "Predict on test data"}).json()["id"]
    client.patch(f"/sessions/s1/blocks/{bid}",
                 json={"prompt": "Predict using .predict()"})

    spans = client.get(f"/sessions/s1/blocks/{bid}/spans").json()["spans"]
    assert any(s["kind"] == "CODE" for s in spans)

    links = client.post(f"/sessions/s1/blocks/{bid}/links",
                        json={"start": 0, "end": 7}).json()["links"]
    assert isinstance(links, list)

    revisions = client.get(
        f"/sessions/s1/blocks/{bid}/revisions").json()["revisions"]
    assert [r["seq"] for r in revisions] == [1, 2]

    diff = client.get(f"/sessions/s1/blocks/{bid}/diff?a=1&b=2").json()
    assert diff["prompt_hunks"]


def test_autocomplete_word_endpoint(client):
    make_session(client)
    bid = client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "child",
        "prompt": "df = read_csv(path)"}).json()["id"]
    jid = client.post(f"/sessions/s1/blocks/{bid}/generate").json()["job_id"]
    wait_job(client, "s1", jid)
    got = client.get(
        f"/sessions/s1/blocks/{bid}/autocomplete_word?prefix=df").json()
    assert got["candidates"][0] == "df"


def test_run_job_returns_output(client):
    make_session(client)
    bid = client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "child",
        "prompt": "print('hello')"}).json()["id"]
    jid = client.post(f"/sessions/s1/blocks/{bid}/generate").json()["job_id"]
    wait_job(client, "s1", jid)
    jid = client.post(f"/sessions/s1/blocks/{bid}/run").json()["job_id"]
    job = wait_job(client, "s1", jid, timeout=30)
    assert job["status"] == "done"
    assert job["result"]["stdout"] == "hello\n"


def test_session_restore_from_document(client):
    make_session(client)
    client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "child", "prompt": "keep me"})
    # duplicate id rejected
    assert client.post("/sessions",
                       json={"session_id": "s1"}).status_code == 409


def test_job_cancel_endpoint_sets_flag(client):
    make_session(client)
    bid = client.post("/sessions/s1/blocks", json={
        "anchor": "root", "relation": "child",
        "prompt": "x = 1"}).json()["id"]
    jid = client.post(f"/sessions/s1/blocks/{bid}/generate").json()["job_id"]
    reply = client.post(f"/sessions/s1/jobs/{jid}/cancel")
    assert reply.json() == {"id": jid, "cancel_requested": True}
    wait_job(client, "s1", jid)


def test_mutation_durable_on_disk(tmp_path):
    app = create_app(backend_factory=MockBackend, data_dir=tmp_path)
    with TestClient(app) as client:
        client.post("/sessions", json={"session_id": "durable"})
        client.post("/sessions/durable/blocks", json={
            "anchor": "root", "relation": "child", "prompt": "persisted"})
        stored = json.loads((tmp_path / "durable.json").read_text())
        assert any(n["prompt"] == "persisted" for n in stored["nodes"])
