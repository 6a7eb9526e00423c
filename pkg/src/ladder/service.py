"""Session-scoped HTTP + server-sent-events service over the engine.

One endpoint per engine operation; long operations (generate, propagate,
list steps, run) return a job id and stream progress events. Optimistic
concurrency via an expected tree version on every mutation.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from pathlib import Path
from typing import Callable

from fastapi import Body, FastAPI, Query, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .errors import (
    ChainAborted,
    Conflict,
    LadderError,
    MockMiss,
    NotFound,
)
from .executor import RunnerConfig
from .gateway import MockBackend, TemplateStore
from .session import Job, Session

STATUS_BY_CODE = {
    "not_found": 404,
    "conflict": 409,
    "mock_miss": 424,
    "backend_unavailable": 502,
    "chain_aborted": 502,
    "timeout": 408,
}


def _error_body(exc: LadderError) -> dict:
    body = {"code": exc.code, "message": str(exc)}
    if exc.path:
        body["path"] = exc.path
    if isinstance(exc, MockMiss) and exc.key:
        body["key"] = exc.key
    if isinstance(exc, ChainAborted) and exc.plan is not None:
        body["aborted_at"] = exc.plan.aborted_at
    return body


def create_app(
    *,
    backend_factory: Callable[[], object] | None = None,
    templates: TemplateStore | None = None,
    cache_factory: Callable[[], object] | None = None,
    data_dir: str | Path | None = None,
    runner: RunnerConfig | None = None,
    synonyms: dict[str, tuple[str, ...]] | None = None,
) -> FastAPI:
    """Build the service; factories are invoked once per created session."""
    app = FastAPI(title="ladder", version="0.1.0")
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    backend_factory = backend_factory or MockBackend
    store = templates or TemplateStore()

    @app.exception_handler(LadderError)
    async def ladder_error_handler(_request: Request, exc: LadderError):
        status = STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(_error_body(exc), status_code=status)

    @app.exception_handler(IndexError)
    async def index_error_handler(_request: Request, exc: IndexError):
        return JSONResponse({"code": "index", "message": str(exc)},
                            status_code=400)

    def get_session(session_id: str) -> Session:
        with registry_lock:
            if session_id not in sessions:
                raise NotFound(f"unknown session {session_id!r}")
            return sessions[session_id]

    @app.get("/health")
    def health():
        return {"status": "ok", "sessions": len(sessions)}

    @app.post("/sessions")
    def create_session(payload: dict = Body(default={})):
        session_id = payload.get("session_id") or f"s{int(time.time() * 1000):x}"
        with registry_lock:
            if session_id in sessions:
                raise Conflict(f"session {session_id!r} already exists")
            kwargs = {}
            if payload.get("runner"):
                raw = payload["runner"]
                kwargs["runner"] = RunnerConfig(
                    command=tuple(raw.get("command", RunnerConfig.command)),
                    filename=raw.get("filename", "program.py"),
                    timeout_s=float(raw.get("timeout_s", 30.0)),
                )
            elif runner is not None:
                kwargs["runner"] = runner
            session = Session(
                session_id,
                backend_factory(),
                templates=store,
                cache=cache_factory() if cache_factory else None,
                data_dir=data_dir,
                synonyms=synonyms,
                **kwargs,
            )
            if payload.get("document"):
                from .tree import from_document
                session.tree = from_document(payload["document"])
                session.tree_version += 1
                session.doc_version += 1
                from .segments import assemble
                session.doc = assemble(session.tree, session.assembly,
                                       session.doc_version)
            sessions[session_id] = session
        return {"session_id": session_id, **session.versions()}

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": sorted(sessions)}

    @app.get("/sessions/{sid}/tree")
    def get_tree(sid: str):
        return get_session(sid).tree_view()

    @app.get("/sessions/{sid}/document")
    def get_document(sid: str):
        return get_session(sid).document_view()

    @app.get("/sessions/{sid}/document/slice")
    def get_slice(sid: str, selected: str):
        return get_session(sid).slice_view(selected)

    @app.post("/sessions/{sid}/document/edit")
    def post_code_edit(sid: str, payload: dict = Body(...)):
        return get_session(sid).apply_code_edit(
            payload["first_line"], payload["last_line"], payload["text"],
            payload.get("expected_version"))

    @app.post("/sessions/{sid}/blocks")
    def post_block(sid: str, payload: dict = Body(...)):
        return get_session(sid).add_block(
            payload["anchor"], payload["relation"], payload.get("prompt", ""),
            payload.get("expected_version"))

    @app.patch("/sessions/{sid}/blocks/{bid}")
    def patch_block(sid: str, bid: str, payload: dict = Body(...)):
        return get_session(sid).edit_prompt(
            bid, payload["prompt"], payload.get("expected_version"))

    @app.delete("/sessions/{sid}/blocks/{bid}")
    def delete_block(sid: str, bid: str, expected_version: int | None = None):
        return get_session(sid).delete_block(bid, expected_version)

    @app.post("/sessions/{sid}/blocks/{bid}/duplicate")
    def post_duplicate(sid: str, bid: str, payload: dict = Body(default={})):
        return get_session(sid).duplicate_block(
            bid, payload.get("expected_version"))

    @app.post("/sessions/{sid}/blocks/{bid}/move")
    def post_move(sid: str, bid: str, payload: dict = Body(...)):
        return get_session(sid).move_block(
            bid, payload["new_parent"], payload["position"],
            payload.get("expected_version"))

    @app.post("/sessions/{sid}/blocks/{bid}/supplements")
    def post_supplement(sid: str, bid: str, payload: dict = Body(...)):
        target = tuple(payload["target"]) if payload.get("target") else None
        return get_session(sid).add_supplement(
            bid, payload["text"], target, payload.get("expected_version"))

    @app.post("/sessions/{sid}/blocks/{bid}/fold")
    def post_fold(sid: str, bid: str, payload: dict = Body(...)):
        return get_session(sid).set_folded(bid, bool(payload["folded"]))

    @app.get("/sessions/{sid}/blocks/{bid}/revisions")
    def get_revisions(sid: str, bid: str):
        return get_session(sid).revisions_view(bid)

    @app.get("/sessions/{sid}/blocks/{bid}/diff")
    def get_diff(sid: str, bid: str, a: int, b: int):
        return get_session(sid).diff_view(bid, a, b)

    @app.get("/sessions/{sid}/blocks/{bid}/spans")
    def get_spans(sid: str, bid: str):
        return get_session(sid).spans_view(bid)

    @app.post("/sessions/{sid}/blocks/{bid}/links")
    def post_links(sid: str, bid: str, payload: dict = Body(...)):
        return get_session(sid).links_view(bid, payload["start"], payload["end"])

    @app.get("/sessions/{sid}/blocks/{bid}/recommend")
    def get_recommend(sid: str, bid: str):
        return {"suggestions": get_session(sid).recommend(bid)}

    @app.post("/sessions/{sid}/blocks/{bid}/autocomplete")
    def post_autocomplete(sid: str, bid: str, payload: dict = Body(...)):
        return get_session(sid).autocomplete_sentence(bid, payload["draft"])

    @app.get("/sessions/{sid}/blocks/{bid}/autocomplete_word")
    def get_autocomplete_word(sid: str, bid: str, prefix: str):
        return get_session(sid).autocomplete_word(bid, prefix)

    # -- jobs -------------------------------------------------------------

    def start_job(session: Session, kind: str, work) -> dict:
        job = session.new_job(kind)
        session.emit(job, {"type": "job.started", "job": job.id, "kind": kind})

        def runner_thread():
            try:
                result = work(job)
                job.result = result
                job.status = "done"
                session.emit(job, {"type": "job.finished", "job": job.id,
                                   "kind": kind, "result": result})
            except LadderError as exc:
                job.status = "failed"
                job.error = _error_body(exc)
                session.emit(job, {"type": "job.failed", "job": job.id,
                                   "kind": kind, "error": job.error})
            except Exception as exc:  # defensive: surface, never hang a job
                job.status = "failed"
                job.error = {"code": "internal", "message": str(exc)}
                session.emit(job, {"type": "job.failed", "job": job.id,
                                   "kind": kind, "error": job.error})

        threading.Thread(target=runner_thread, daemon=True).start()
        return {"job_id": job.id}

    @app.post("/sessions/{sid}/blocks/{bid}/generate")
    def post_generate(sid: str, bid: str, payload: dict = Body(default={})):
        session = get_session(sid)
        op_kind = payload.get("op_kind", "add")
        return start_job(session, "generate",
                         lambda job: session.generate(bid, op_kind, job=job))

    @app.post("/sessions/{sid}/propagate")
    def post_propagate(sid: str, payload: dict = Body(...)):
        session = get_session(sid)
        receipt = payload["receipt"]
        return start_job(session, "propagate",
                         lambda job: session.propagate(receipt, job=job))

    @app.post("/sessions/{sid}/blocks/{bid}/list_steps")
    def post_list_steps(sid: str, bid: str):
        session = get_session(sid)
        return start_job(session, "list_steps",
                         lambda job: session.list_steps(bid, job=job))

    @app.post("/sessions/{sid}/blocks/{bid}/run")
    def post_run(sid: str, bid: str):
        session = get_session(sid)
        return start_job(session, "run",
                         lambda job: session.run(bid, job=job))

    @app.get("/sessions/{sid}/jobs/{jid}")
    def get_job(sid: str, jid: str):
        job: Job = get_session(sid).job(jid)
        return {"id": job.id, "kind": job.kind, "status": job.status,
                "events": job.events, "result": job.result, "error": job.error}

    @app.post("/sessions/{sid}/jobs/{jid}/cancel")
    def cancel_job(sid: str, jid: str):
        job: Job = get_session(sid).job(jid)
        job.cancel_requested = True
        return {"id": job.id, "cancel_requested": True}

    @app.get("/sessions/{sid}/events")
    def get_events(sid: str, limit: int = Query(default=0),
                   timeout: float = Query(default=30.0)):
        session = get_session(sid)

        def stream():
            q = session.bus.subscribe()
            sent = 0
            deadline = time.monotonic() + timeout
            try:
                while time.monotonic() < deadline:
                    try:
                        event = q.get(timeout=min(0.25, timeout))
                    except queue.Empty:
                        continue
                    yield f"event: {event['type']}\ndata: {json.dumps(event)}\n\n"
                    sent += 1
                    if limit and sent >= limit:
                        break
            finally:
                session.bus.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    app.state.sessions = sessions
    return app
