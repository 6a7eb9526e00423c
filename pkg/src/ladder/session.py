"""Session wiring: one tree + generator + cache + document per session id.

All mutating operations on a session are serialized through one lock
(single-writer); reads serve from the current snapshot. Every acknowledged
mutation is written to disk first when a data directory is configured.
"""

from __future__ import annotations

import json
import os
import queue
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

from .cache import GenCache
from .codegen import CodeGenerator, GenerationOutcome, PropagationPlan
from .errors import Conflict, NotFound, ParseError
from .executor import RunnerConfig, RunResult, run_block
from .gateway import GenerationParams, TemplateStore
from .links import links_for
from .mixed_mode import classify_spans
from .segments import (
    DEFAULT_ASSEMBLY,
    AssemblyConfig,
    CodeDocument,
    apply_code_edit,
    assemble,
    export_sidecar,
    visible_slice,
)
from .tree import (
    DeleteReceipt,
    EditReceipt,
    MoveReceipt,
    PromptTree,
    Receipt,
    SupplementReceipt,
    deserialize,
)


def receipt_to_dict(receipt: Receipt) -> dict:
    payload = asdict(receipt)
    payload["kind"] = receipt.kind
    return payload


def receipt_from_dict(payload: dict) -> Receipt:
    kinds = {
        "edit": EditReceipt,
        "delete": DeleteReceipt,
        "move": MoveReceipt,
        "supplement": SupplementReceipt,
    }
    kind = payload.get("kind")
    if kind not in kinds:
        raise ParseError(f"unknown receipt kind {kind!r}", path="$.kind")
    cls = kinds[kind]
    fields = {k: v for k, v in payload.items() if k != "kind"}
    for key in ("scope", "removed", "removed_prompts"):
        if key in fields and isinstance(fields[key], list):
            fields[key] = tuple(fields[key])
    try:
        return cls(**fields)
    except TypeError as exc:
        raise ParseError(f"bad receipt payload: {exc}", path="$") from None


class EventBus:
    """Fan-out of session events to any number of subscriber queues."""

    def __init__(self):
        self._subscribers: list[queue.Queue] = []
        self._lock = threading.Lock()

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, event: dict) -> None:
        with self._lock:
            targets = list(self._subscribers)
        for q in targets:
            q.put(event)


@dataclass
class Job:
    id: str
    kind: str
    status: str = "running"  # running | done | failed
    events: list[dict] = field(default_factory=list)
    result: dict | None = None
    error: dict | None = None
    cancel_requested: bool = False


class Session:
    """One prompt tree with its generator, cache, document, and history."""

    def __init__(
        self,
        session_id: str,
        backend,
        *,
        templates: TemplateStore | None = None,
        cache: GenCache | None = None,
        data_dir: Path | str | None = None,
        clock: Callable[[], float] = time.time,
        assembly: AssemblyConfig = DEFAULT_ASSEMBLY,
        params: GenerationParams = GenerationParams(),
        runner: RunnerConfig | None = None,
        tree: PromptTree | None = None,
        synonyms: dict[str, tuple[str, ...]] | None = None,
    ):
        self.session_id = session_id
        self.backend = backend
        self.cache = cache
        self.assembly = assembly
        self.runner = runner or RunnerConfig()
        self.synonyms = synonyms
        self.data_dir = Path(data_dir) if data_dir else None
        self.tree = tree or PromptTree(session_id, clock=clock)
        self.generator = CodeGenerator(
            backend, templates=templates, cache=cache,
            assembly=assembly, params=params)
        self.doc: CodeDocument = assemble(self.tree, assembly, 0)
        self.tree_version = 0
        self.doc_version = 0
        self.lock = threading.RLock()
        self.bus = EventBus()
        self.jobs: dict[str, Job] = {}
        self._job_counter = 0

    # -- plumbing ----------------------------------------------------------

    @classmethod
    def load(cls, path: Path | str, backend, **kwargs) -> "Session":
        data = Path(path).read_bytes()
        tree = deserialize(data, clock=kwargs.get("clock", time.time))
        session = cls(tree.session_id, backend, tree=tree, **kwargs)
        return session

    def _check_version(self, expected: int | None) -> None:
        if expected is not None and expected != self.tree_version:
            raise Conflict(
                f"expected tree version {expected}, is {self.tree_version}")

    def _persist(self) -> None:
        if self.data_dir is None:
            return
        self.data_dir.mkdir(parents=True, exist_ok=True)
        target = self.data_dir / f"{self.session_id}.json"
        tmp = target.with_suffix(".json.tmp")
        tmp.write_bytes(self.tree.serialize())
        os.replace(tmp, target)

    def _commit(self) -> dict:
        self.tree_version += 1
        self.doc_version += 1
        self.doc = assemble(self.tree, self.assembly, self.doc_version)
        self._persist()
        return self.versions()

    def versions(self) -> dict:
        return {"tree_version": self.tree_version, "doc_version": self.doc_version}

    def new_job(self, kind: str) -> Job:
        with self.lock:
            self._job_counter += 1
            job = Job(f"j{self._job_counter}", kind)
            self.jobs[job.id] = job
            return job

    def job(self, job_id: str) -> Job:
        try:
            return self.jobs[job_id]
        except KeyError:
            raise NotFound(f"unknown job {job_id!r}") from None

    def emit(self, job: Job | None, event: dict) -> None:
        if job is not None:
            job.events.append(event)
        self.bus.publish(event)

    # -- tree mutations ------------------------------------------------------

    def add_block(self, anchor: str, relation: str, prompt: str,
                  expected_version: int | None = None) -> dict:
        with self.lock:
            self._check_version(expected_version)
            node_id = self.tree.add_block(anchor, relation, prompt)
            return {"id": node_id, **self._commit()}

    def edit_prompt(self, block: str, prompt: str,
                    expected_version: int | None = None) -> dict:
        with self.lock:
            self._check_version(expected_version)
            receipt = self.tree.edit_prompt(block, prompt)
            versions = self._commit() if receipt.changed else self.versions()
            return {"receipt": receipt_to_dict(receipt), **versions}

    def delete_block(self, block: str,
                     expected_version: int | None = None) -> dict:
        with self.lock:
            self._check_version(expected_version)
            receipt = self.tree.delete_block(block)
            return {"receipt": receipt_to_dict(receipt), **self._commit()}

    def duplicate_block(self, block: str,
                        expected_version: int | None = None) -> dict:
        with self.lock:
            self._check_version(expected_version)
            copy_id = self.tree.duplicate_block(block)
            return {"id": copy_id, **self._commit()}

    def move_block(self, block: str, new_parent: str, position: int,
                   expected_version: int | None = None) -> dict:
        with self.lock:
            self._check_version(expected_version)
            receipt = self.tree.move_block(block, new_parent, position)
            versions = self._commit() if receipt.changed else self.versions()
            return {"receipt": receipt_to_dict(receipt), **versions}

    def add_supplement(self, block: str, text: str,
                       target: tuple[int, int] | None = None,
                       expected_version: int | None = None) -> dict:
        with self.lock:
            self._check_version(expected_version)
            supplement = self.tree.add_supplement(block, text, target)
            receipt = self.tree.supplement_receipt(block, text)
            return {
                "supplement": {
                    "text": supplement.text,
                    "target": supplement.target,
                    "created_at": supplement.created_at,
                },
                "badge_count": self.tree.block(block).badge_count,
                "receipt": receipt_to_dict(receipt),
                **self._commit(),
            }

    def set_folded(self, block: str, folded: bool) -> dict:
        with self.lock:
            self.tree.set_folded(block, folded)
            self._persist()
            return self.versions()

    def apply_code_edit(self, first_line: int, last_line: int, text: str,
                        expected_version: int | None = None) -> dict:
        with self.lock:
            self._check_version(expected_version)
            routing = apply_code_edit(
                self.tree, self.doc, first_line, last_line, text, self.assembly)
            versions = self._commit()
            return {"block": routing.block, **versions}

    # -- generation ----------------------------------------------------------

    def generate(self, block: str, op_kind: str = "add",
                 job: Job | None = None) -> dict:
        with self.lock:
            outcome: GenerationOutcome = self.generator.generate_block(
                self.tree, block, op_kind)
            versions = self._commit()
            result = {
                "block": block,
                "updated": outcome.updated,
                "cache_hit": outcome.cache_hit,
                "suggestion": None if outcome.suggestion is None else {
                    "similarity": outcome.suggestion.similarity,
                    "response": outcome.suggestion.exchange.response,
                },
                "warnings": outcome.warnings,
                **versions,
            }
            return result

    def propagate(self, receipt: Receipt | dict, job: Job | None = None) -> dict:
        if isinstance(receipt, dict):
            receipt = receipt_from_dict(receipt)
        with self.lock:
            def on_step(step, index, total):
                self._persist()
                self.emit(job, {
                    "type": "job.step",
                    "job": None if job is None else job.id,
                    "step": {"block": step.block, "reason": step.reason,
                             "outcome": step.outcome},
                    "index": index,
                    "total": total,
                })

            plan: PropagationPlan = self.generator.propagate_changes(
                self.tree, receipt, on_step=on_step,
                cancelled=(lambda: job.cancel_requested) if job else None)
            versions = self._commit()
            return {
                "plan": [
                    {"block": s.block, "reason": s.reason, "outcome": s.outcome}
                    for s in plan.steps
                ],
                "aborted_at": plan.aborted_at,
                **versions,
            }

    def list_steps(self, block: str, job: Job | None = None) -> dict:
        with self.lock:
            new_ids = self.generator.list_steps(self.tree, block)
            versions = self._commit()
            return {"block": block, "new_blocks": new_ids, **versions}

    def recommend(self, block: str) -> list[dict]:
        with self.lock:
            return [
                {"prompt": text, "score": score}
                for text, score in self.generator.recommend_next(self.tree, block)
            ]

    def autocomplete_sentence(self, block: str, draft: str) -> dict:
        with self.lock:
            return {"completion":
                    self.generator.autocomplete_sentence(self.tree, block, draft)}

    def autocomplete_word(self, block: str, prefix: str) -> dict:
        with self.lock:
            return {"candidates":
                    self.generator.autocomplete_word(self.tree, block, prefix)}

    def run(self, block: str, job: Job | None = None) -> dict:
        with self.lock:
            result: RunResult = run_block(self.tree, block, self.runner,
                                          self.assembly)
        import base64
        return {
            "exit_status": result.exit_status,
            "stdout": result.stdout,
            "stderr": result.stderr,
            "artifacts": result.artifacts,
            "artifact_data": {
                name: base64.b64encode(blob).decode("ascii")
                for name, blob in result.artifact_data.items()
            },
            "wall_ms": result.wall_ms,
            "stdout_truncated": result.stdout_truncated,
            "stderr_truncated": result.stderr_truncated,
        }

    # -- views ---------------------------------------------------------------

    def tree_view(self) -> dict:
        with self.lock:
            nodes = []
            for nid in self.tree.preorder():
                block = self.tree.nodes[nid]
                nodes.append({
                    "id": nid,
                    "parent": block.parent,
                    "children": list(block.children),
                    "prompt": block.prompt,
                    "folded": block.folded,
                    "badge_count": block.badge_count,
                    "depth": self.tree.depth(nid),
                    "has_code": bool(block.segment.own_code),
                    "revision_count": len(block.revisions),
                })
            return {"session_id": self.session_id, "nodes": nodes,
                    **self.versions()}

    def document_view(self) -> dict:
        with self.lock:
            return {
                "text": self.doc.text,
                "index": {k: list(v) for k, v in self.doc.index.items()},
                **self.versions(),
            }

    def slice_view(self, selected: str) -> dict:
        with self.lock:
            view = visible_slice(self.doc, selected)
            return {
                "selected": view.selected,
                "path": list(view.path),
                "folded": [
                    {"block": f.block, "first_line": f.first_line,
                     "last_line": f.last_line, "placeholder": f.placeholder}
                    for f in view.folded
                ],
                "text": view.text,
                **self.versions(),
            }

    def spans_view(self, block: str) -> dict:
        with self.lock:
            prompt = self.tree.block(block).prompt
            spans = classify_spans(prompt)
            return {"prompt": prompt,
                    "spans": [{"start": s.start, "end": s.end, "kind": s.kind}
                              for s in spans]}

    def links_view(self, block: str, start: int, end: int) -> dict:
        with self.lock:
            links = links_for(self.tree, self.doc, block, start, end,
                              synonyms=self.synonyms)
            out = []
            for link in links:
                target: dict
                if hasattr(link.target, "token"):
                    target = {
                        "kind": "code",
                        "line": link.target.line,
                        "start_col": link.target.start_col,
                        "end_col": link.target.end_col,
                        "token": link.target.token,
                    }
                else:
                    target = {
                        "kind": "phrase",
                        "block": link.target.block,
                        "start": link.target.start,
                        "end": link.target.end,
                    }
                out.append({"target": target, "entity_type": link.entity_type,
                            "score": link.score})
            return {"links": out}

    def revisions_view(self, block: str) -> dict:
        with self.lock:
            revisions = self.tree.block(block).revisions
            return {"revisions": [
                {
                    "seq": r.seq,
                    "op_kind": r.op_kind,
                    "prompt_before": r.prompt_before,
                    "prompt_after": r.prompt_after,
                    "code_before": r.code_before,
                    "code_after": r.code_after,
                    "timestamp": r.timestamp,
                }
                for r in revisions
            ]}

    def diff_view(self, block: str, a: int, b: int) -> dict:
        with self.lock:
            view = self.tree.diff_revisions(block, a, b)

            def hunks(items):
                return [
                    {"tag": h.tag, "a_start": h.a_start, "a_end": h.a_end,
                     "b_start": h.b_start, "b_end": h.b_end,
                     "a_lines": list(h.a_lines), "b_lines": list(h.b_lines)}
                    for h in items
                ]

            return {"block": block, "a": a, "b": b,
                    "prompt_hunks": hunks(view.prompt_hunks),
                    "code_hunks": hunks(view.code_hunks)}

    # -- export ---------------------------------------------------------------

    def export(self, out_dir: Path | str) -> dict[str, Path]:
        with self.lock:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            program = out / "program.py"
            program.write_text(self.doc.text, encoding="utf-8")
            sidecar = out / "program.map.json"
            sidecar.write_text(
                json.dumps(export_sidecar(self.tree, self.doc),
                           sort_keys=True, indent=2) + "\n",
                encoding="utf-8")
            session_doc = out / "session.json"
            session_doc.write_bytes(self.tree.serialize())
            return {"program": program, "sidecar": sidecar,
                    "session": session_doc}


# -- scripted op dispatch (replay / record) ------------------------------------


def resolve_ref(value: str, binds: dict[str, str]) -> str:
    if isinstance(value, str) and value.startswith("$"):
        name = value[1:]
        if name not in binds:
            raise ParseError(f"unbound reference {value!r}", path="$.ops")
        return binds[name]
    return value


def apply_op(session: Session, op: dict, binds: dict[str, str]) -> dict:
    """Run one scripted operation against a session; returns its result."""
    kind = op.get("op")
    ref = lambda key: resolve_ref(op[key], binds)

    if kind == "add_block":
        result = session.add_block(ref("anchor"), op["relation"], op["prompt"])
        if "bind" in op:
            binds[op["bind"]] = result["id"]
        return result
    if kind == "edit_prompt":
        result = session.edit_prompt(ref("block"), op["prompt"])
        if op.get("propagate") and result["receipt"]["changed"]:
            result["propagation"] = session.propagate(result["receipt"])
        return result
    if kind == "delete_block":
        result = session.delete_block(ref("block"))
        if op.get("propagate") and result["receipt"]["scope"]:
            result["propagation"] = session.propagate(result["receipt"])
        return result
    if kind == "duplicate_block":
        result = session.duplicate_block(ref("block"))
        if "bind" in op:
            binds[op["bind"]] = result["id"]
        return result
    if kind == "move_block":
        result = session.move_block(ref("block"), ref("new_parent"),
                                    op["position"])
        if op.get("propagate") and result["receipt"]["changed"]:
            result["propagation"] = session.propagate(result["receipt"])
        return result
    if kind == "add_supplement":
        target = tuple(op["target"]) if op.get("target") else None
        result = session.add_supplement(ref("block"), op["text"], target)
        if op.get("propagate"):
            result["propagation"] = session.propagate(result["receipt"])
        return result
    if kind == "set_folded":
        return session.set_folded(ref("block"), bool(op["folded"]))
    if kind == "generate":
        return session.generate(ref("block"), op.get("op_kind", "add"))
    if kind == "list_steps":
        result = session.list_steps(ref("block"))
        for name, node_id in zip(op.get("bind_children", []),
                                 result["new_blocks"]):
            binds[name] = node_id
        return result
    if kind == "recommend":
        return {"suggestions": session.recommend(ref("block"))}
    if kind == "autocomplete_sentence":
        return session.autocomplete_sentence(ref("block"), op["draft"])
    if kind == "autocomplete_word":
        return session.autocomplete_word(ref("block"), op["prefix"])
    if kind == "apply_code_edit":
        return session.apply_code_edit(op["first_line"], op["last_line"],
                                       op["text"])
    if kind == "run":
        return session.run(ref("block"))
    raise ParseError(f"unknown op {kind!r}", path="$.ops")


def run_script(session: Session, script: dict) -> dict:
    """Execute a recorded op script; returns binds and per-op results."""
    binds: dict[str, str] = {}
    results = []
    for op in script.get("ops", []):
        results.append(apply_op(session, op, binds))
    return {"binds": binds, "results": results}
