"""Language-model backends and the few-shot template store.

Backends share one interface: ``complete(request, params) -> GenerationExchange``.
The live backend speaks a provider-agnostic chat-completions JSON wire format;
the mock backend replays fixture responses keyed by the canonical request key
(hash of template name + canonicalized slots), which is what makes recorded
sessions replayable offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import string
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import httpx

from .errors import (
    BackendUnavailable,
    ContextOverflow,
    MockMiss,
    TemplateError,
)

ENV_URL = "LADDER_LLM_URL"
ENV_KEY = "LADDER_LLM_KEY"

DEFAULT_CONTEXT_BUDGET = 64 * 1024  # serialized request characters


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    content: str


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 1024


def canonical_key(template: str, slots: Mapping[str, str]) -> str:
    """Order-insensitive hash of (template, slots)."""
    payload = json.dumps(
        {"template": template, "slots": dict(sorted(slots.items()))},
        sort_keys=True, separators=(",", ":"), ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class PromptRequest:
    template: str
    slots: tuple[tuple[str, str], ...]
    messages: tuple[ChatMessage, ...]

    @property
    def slot_map(self) -> dict[str, str]:
        return dict(self.slots)

    @property
    def canonical_key(self) -> str:
        return canonical_key(self.template, self.slot_map)

    @property
    def size(self) -> int:
        return sum(len(m.content) for m in self.messages)


@dataclass(frozen=True)
class GenerationExchange:
    request: PromptRequest
    params: GenerationParams
    response: str
    backend_id: str
    latency_ms: float


_SECTION_RE = re.compile(r"^== (system|user|assistant) ==$")


class TemplateStore:
    """Loads versioned template files and renders them deterministically."""

    def __init__(self, root: Path | str | None = None):
        self.root = Path(root) if root else Path(__file__).parent / "templates"
        self._parsed: dict[str, list[tuple[str, str]]] = {}

    def _sections(self, name: str) -> list[tuple[str, str]]:
        if name in self._parsed:
            return self._parsed[name]
        path = self.root / f"{name}.tmpl"
        if not path.is_file():
            raise TemplateError(f"unknown template {name!r}")
        sections: list[tuple[str, list[str]]] = []
        for line in path.read_text(encoding="utf-8").split("\n"):
            m = _SECTION_RE.match(line)
            if m:
                sections.append((m.group(1), []))
            elif sections:
                sections[-1][1].append(line)
            elif line.strip():
                raise TemplateError(f"template {name!r} has text before a role header")
        parsed = [(role, "\n".join(lines).strip("\n")) for role, lines in sections]
        self._parsed[name] = parsed
        return parsed

    def render(self, name: str, slots: Mapping[str, str]) -> PromptRequest:
        messages = []
        for role, body in self._sections(name):
            try:
                content = string.Template(body).substitute(slots)
            except KeyError as exc:
                raise TemplateError(
                    f"template {name!r} missing slot {exc.args[0]!r}") from None
            messages.append(ChatMessage(role, content))
        return PromptRequest(
            template=name,
            slots=tuple(sorted((k, str(v)) for k, v in slots.items())),
            messages=tuple(messages),
        )


def _check_budget(request: PromptRequest, budget: int) -> None:
    if request.size > budget:
        raise ContextOverflow(
            f"request of {request.size} chars exceeds budget {budget}")


@dataclass
class FixtureRecord:
    template: str
    slots: dict[str, str]
    response: str
    match: str = "exact"  # exact | prefix

    @property
    def key(self) -> str:
        return canonical_key(self.template, self.slots)


class MockBackend:
    """Deterministic scripted backend; referentially transparent."""

    backend_id = "mock"

    def __init__(
        self,
        records: Iterable[FixtureRecord] = (),
        default_responses: Mapping[str, str] | None = None,
        context_budget: int = DEFAULT_CONTEXT_BUDGET,
    ):
        self._exact: dict[str, FixtureRecord] = {}
        self._prefix: list[FixtureRecord] = []
        self.default_responses = dict(default_responses or {})
        self.context_budget = context_budget
        self.call_count = 0
        for record in records:
            self.add_record(record)

    def add_record(self, record: FixtureRecord) -> None:
        if record.match == "prefix":
            self._prefix.append(record)
        else:
            self._exact[record.key] = record

    def add(self, template: str, slots: Mapping[str, str], response: str,
            match: str = "exact") -> None:
        self.add_record(FixtureRecord(template, dict(slots), response, match))

    @classmethod
    def from_dir(cls, path: Path | str, **kwargs) -> "MockBackend":
        backend = cls(**kwargs)
        files = sorted(Path(path).glob("*.json"))
        for file in files:
            payload = json.loads(file.read_text(encoding="utf-8"))
            for raw in payload.get("records", []):
                backend.add_record(FixtureRecord(
                    template=raw["key"]["template"],
                    slots=dict(raw["key"]["slots"]),
                    response=raw["response"],
                    match=raw.get("match", "exact"),
                ))
        return backend

    def _find(self, request: PromptRequest) -> str:
        record = self._exact.get(request.canonical_key)
        if record is not None:
            return record.response
        slot_map = request.slot_map
        for record in self._prefix:
            if record.template != request.template:
                continue
            if set(record.slots) == set(slot_map) and all(
                slot_map[k].startswith(v) for k, v in record.slots.items()
            ):
                return record.response
        if request.template in self.default_responses:
            return self.default_responses[request.template]
        raise MockMiss(
            f"no fixture for template {request.template!r} "
            f"(key {request.canonical_key})",
            key=request.canonical_key,
        )

    def complete(self, request: PromptRequest,
                 params: GenerationParams = GenerationParams()) -> GenerationExchange:
        _check_budget(request, self.context_budget)
        response = self._find(request)
        self.call_count += 1
        return GenerationExchange(request, params, response, self.backend_id, 0.0)


class LiveBackend:
    """Chat-completions HTTP backend; retries transient failures 3 times."""

    backend_id = "live"
    max_attempts = 3

    def __init__(
        self,
        url: str | None = None,
        api_key: str | None = None,
        model: str = "default",
        context_budget: int = DEFAULT_CONTEXT_BUDGET,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.url = url or os.environ.get(ENV_URL)
        self.api_key = api_key or os.environ.get(ENV_KEY, "")
        self.model = model
        self.context_budget = context_budget
        self.call_count = 0
        self._sleep = sleep
        self._client = httpx.Client(transport=transport, timeout=60.0)

    def complete(self, request: PromptRequest,
                 params: GenerationParams = GenerationParams()) -> GenerationExchange:
        _check_budget(request, self.context_budget)
        if not self.url:
            raise BackendUnavailable(f"{ENV_URL} is not configured")
        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content}
                         for m in request.messages],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        start = time.monotonic()
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(0.5 * 2 ** (attempt - 1))
            try:
                reply = self._client.post(self.url, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if reply.status_code >= 500 or reply.status_code == 429:
                last_error = BackendUnavailable(f"backend status {reply.status_code}")
                continue
            if reply.status_code >= 400:
                raise BackendUnavailable(
                    f"backend rejected request: {reply.status_code} {reply.text[:200]}")
            try:
                text = reply.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as exc:
                raise BackendUnavailable(f"malformed backend reply: {exc}") from None
            self.call_count += 1
            latency = (time.monotonic() - start) * 1000.0
            return GenerationExchange(request, params, text, self.backend_id, latency)
        raise BackendUnavailable(f"backend unreachable after "
                                 f"{self.max_attempts} attempts: {last_error}")


class RecordingBackend:
    """Wraps a backend and captures every exchange as a replayable fixture."""

    def __init__(self, inner):
        self.inner = inner
        self.records: list[FixtureRecord] = []

    @property
    def backend_id(self) -> str:
        return self.inner.backend_id

    @property
    def call_count(self) -> int:
        return self.inner.call_count

    def complete(self, request: PromptRequest,
                 params: GenerationParams = GenerationParams()) -> GenerationExchange:
        exchange = self.inner.complete(request, params)
        self.records.append(FixtureRecord(
            request.template, request.slot_map, exchange.response))
        return exchange

    def save(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "version": 1,
            "records": [
                {
                    "key": {"template": r.template, "slots": r.slots},
                    "match": r.match,
                    "response": r.response,
                }
                for r in self.records
            ],
        }
        path.write_text(
            json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8")
        return path
