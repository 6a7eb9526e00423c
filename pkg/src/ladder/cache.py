"""Generation cache: exact canonical-key hits plus semantic nearest-neighbour.

Exact hits replay a recorded exchange and save a backend call; semantic
near-hits (cosine >= threshold over unit-norm embeddings) are only surfaced as
suggestions so that enabling the cache can never change a produced document.
A linear scan is enough at the 1024-entry session capacity.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gateway import GenerationExchange, GenerationParams, PromptRequest
from .mixed_mode import normalize_pieces

DEFAULT_CAPACITY = 1024
DEFAULT_THRESHOLD = 0.95

_TOKEN_RE = re.compile(r"[A-Za-z_]\w*")


class LexicalEmbedder:
    """Deterministic hashed bag-of-word-pieces embedding, unit-normalized."""

    def __init__(self, dim: int = 256):
        self.dim = dim

    def _bucket(self, piece: str) -> int:
        digest = hashlib.blake2s(piece.encode("utf-8"), digest_size=4).digest()
        return int.from_bytes(digest, "big") % self.dim

    def __call__(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in _TOKEN_RE.findall(text):
            for piece in normalize_pieces(token):
                vec[self._bucket(piece)] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec[0] = 1.0
            return vec
        return vec / norm


@dataclass(frozen=True)
class CacheEntry:
    canonical_key: str
    embedding: np.ndarray
    exchange: GenerationExchange
    block: str
    seq: int


@dataclass(frozen=True)
class CacheHit:
    exchange: GenerationExchange
    exact: bool
    similarity: float
    entry: CacheEntry


class GenCache:
    """Per-session cache of generation exchanges; oldest-first eviction."""

    def __init__(
        self,
        capacity: int = DEFAULT_CAPACITY,
        threshold: float = DEFAULT_THRESHOLD,
        embedder=None,
    ):
        self.capacity = capacity
        self.threshold = threshold
        self.embedder = embedder or LexicalEmbedder()
        self.entries: list[CacheEntry] = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self.entries)

    def make_entry(self, key: str, text: str, exchange: GenerationExchange,
                   block: str) -> CacheEntry:
        self._seq += 1
        return CacheEntry(key, self.embedder(text), exchange, block, self._seq)

    def insert(self, entry: CacheEntry) -> None:
        norm = float(np.linalg.norm(entry.embedding))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"entry embedding norm {norm} is not 1")
        self.entries.append(entry)
        while len(self.entries) > self.capacity:
            self.entries.pop(0)

    def lookup(self, key: str, query_text: str) -> CacheHit | None:
        best_exact: CacheEntry | None = None
        for entry in self.entries:
            if entry.canonical_key == key:
                if best_exact is None or entry.seq > best_exact.seq:
                    best_exact = entry
        if best_exact is not None:
            return CacheHit(best_exact.exchange, True, 1.0, best_exact)
        if not self.entries:
            return None
        query = self.embedder(query_text)
        best: CacheEntry | None = None
        best_sim = -1.0
        for entry in self.entries:
            sim = float(np.dot(entry.embedding, query))
            if sim > best_sim or (sim == best_sim and
                                  (best is None or entry.seq > best.seq)):
                best, best_sim = entry, sim
        if best is not None and best_sim >= self.threshold:
            return CacheHit(best.exchange, False, best_sim, best)
        return None

    # -- persistence -------------------------------------------------------

    def save(self, path: Path | str) -> None:
        payload = {
            "version": 1,
            "seq": self._seq,
            "entries": [
                {
                    "canonical_key": e.canonical_key,
                    "embedding": [float(x) for x in e.embedding],
                    "block": e.block,
                    "seq": e.seq,
                    "exchange": {
                        "template": e.exchange.request.template,
                        "slots": e.exchange.request.slot_map,
                        "response": e.exchange.response,
                        "backend_id": e.exchange.backend_id,
                    },
                }
                for e in self.entries
            ],
        }
        Path(path).write_text(
            json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8")

    def load(self, path: Path | str) -> None:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        self.entries = []
        for raw in payload.get("entries", []):
            ex = raw["exchange"]
            request = PromptRequest(
                template=ex["template"],
                slots=tuple(sorted(ex["slots"].items())),
                messages=(),
            )
            exchange = GenerationExchange(
                request, GenerationParams(), ex["response"], ex["backend_id"], 0.0)
            self.entries.append(CacheEntry(
                raw["canonical_key"],
                np.asarray(raw["embedding"], dtype=np.float64),
                exchange,
                raw["block"],
                raw["seq"],
            ))
        self._seq = int(payload.get("seq", len(self.entries)))
