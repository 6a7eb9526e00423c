"""Scored correlation links between prompt phrases, other blocks, and code.

Scoring is deterministic and lexical: exact normalized-token match 1.0,
shared word-piece stem 0.7, synonym-table pair 0.6, piece-substring 0.5,
anything below 0.5 produces no link. Opacity in the UI is the score itself.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import RangeError
from .mixed_mode import normalize_pieces
from .segments import CodeDocument
from .tree import ROOT_ID, PromptTree

VARIABLE = "variable"
FUNCTION = "function"
DATA_ENTITY = "data-entity"
ACTION = "action"

# Small data-science vocabulary; extensible via a synonym table file.
DEFAULT_SYNONYMS: dict[str, tuple[str, ...]] = {
    "df": ("data", "table", "dataframe", "dataset"),
    "plot": ("chart", "graph", "figure"),
    "target": ("label", "outcome"),
}

DATA_NOUNS = frozenset({
    "df", "data", "dataset", "dataframe", "table", "csv", "frame", "column",
    "row", "feature", "features", "label", "labels", "target",
})
ACTION_VERBS = frozenset({
    "train", "fit", "predict", "plot", "load", "read", "save", "split",
    "partition", "evaluate", "compute", "clean", "merge", "build", "draw",
    "print", "run", "test",
})

_SUFFIXES = ("ing", "ers", "ions", "ion", "ed", "es", "er", "s")

_CODE_TOKEN_RE = re.compile(r"\.?[A-Za-z_]\w*")


def _stem(piece: str) -> str:
    for suffix in _SUFFIXES:
        if piece.endswith(suffix) and len(piece) - len(suffix) >= 3:
            return piece[: len(piece) - len(suffix)]
    return piece


def load_synonyms(path: Path | str) -> dict[str, tuple[str, ...]]:
    """Synonym table file: {"version": 1, "synonyms": {key: [equivalents]}}."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return {k: tuple(v) for k, v in payload.get("synonyms", {}).items()}


def _synonym_groups(table: dict[str, tuple[str, ...]]) -> list[frozenset[str]]:
    return [frozenset({key, *values}) for key, values in table.items()]


def score_tokens(
    a_pieces: tuple[str, ...] | list[str],
    b_pieces: tuple[str, ...] | list[str],
    synonyms: dict[str, tuple[str, ...]] | None = None,
) -> float:
    """Symmetric lexical relatedness of two normalized piece lists."""
    a, b = list(a_pieces), list(b_pieces)
    if not a or not b:
        return 0.0
    if a == b:
        return 1.0
    score = 0.0
    a_stems, b_stems = {_stem(p) for p in a}, {_stem(p) for p in b}
    if a_stems & b_stems:
        score = 0.7
    groups = _synonym_groups(
        DEFAULT_SYNONYMS if synonyms is None else synonyms)
    if score < 0.6:
        for group in groups:
            if set(a) & group and set(b) & group and (set(a) & group) != (set(b) & group):
                score = 0.6
                break
    if score < 0.5:
        for pa in a:
            for pb in b:
                if len(pa) >= 2 and len(pb) >= 2 and (pa in pb or pb in pa):
                    score = 0.5
                    break
    return score


@dataclass(frozen=True)
class PhraseTarget:
    block: str
    start: int
    end: int


@dataclass(frozen=True)
class CodeTarget:
    doc_version: int
    line: int  # 1-based
    start_col: int
    end_col: int
    token: str


@dataclass(frozen=True)
class CorrelationLink:
    source_block: str
    source_range: tuple[int, int]
    target: PhraseTarget | CodeTarget
    entity_type: str
    score: float


def _code_entity(line: str, match: re.Match) -> str:
    after = line[match.end():].lstrip()
    if after.startswith("("):
        return FUNCTION
    before = line[: match.start()]
    rest = line[match.end():]
    if re.match(r"\s*(?:,\s*\w+\s*)*=[^=]", rest) and not before.strip():
        return VARIABLE
    pieces = set(normalize_pieces(match.group()))
    if pieces & DATA_NOUNS:
        return DATA_ENTITY
    if pieces & ACTION_VERBS:
        return ACTION
    return VARIABLE


def _phrase_entity(pieces: set[str]) -> str:
    if pieces & ACTION_VERBS:
        return ACTION
    if pieces & DATA_NOUNS:
        return DATA_ENTITY
    return ACTION


def links_for(
    tree: PromptTree,
    doc: CodeDocument,
    source_block: str,
    start: int,
    end: int,
    synonyms: dict[str, tuple[str, ...]] | None = None,
) -> list[CorrelationLink]:
    """All scored links from one prompt phrase to other blocks and code tokens."""
    block = tree.block(source_block)
    if not (0 <= start <= end <= len(block.prompt)):
        raise RangeError(f"phrase range {start}..{end} outside prompt")
    phrase = block.prompt[start:end]
    source_pieces = normalize_pieces(phrase)
    if not source_pieces:
        return []

    links: list[CorrelationLink] = []

    for nid in tree.preorder():
        if nid in (ROOT_ID, source_block):
            continue
        other = tree.nodes[nid]
        if not other.prompt.strip():
            continue
        target_pieces = normalize_pieces(other.prompt)
        score = score_tokens(source_pieces, target_pieces, synonyms)
        if score >= 0.5:
            links.append(CorrelationLink(
                source_block, (start, end),
                PhraseTarget(nid, 0, len(other.prompt)),
                _phrase_entity(set(target_pieces)),
                score,
            ))

    for lineno, line in enumerate(doc.lines, start=1):
        for m in _CODE_TOKEN_RE.finditer(line):
            token_pieces = normalize_pieces(m.group())
            score = score_tokens(source_pieces, token_pieces, synonyms)
            if score >= 0.5:
                links.append(CorrelationLink(
                    source_block, (start, end),
                    CodeTarget(doc.doc_version, lineno, m.start(), m.end(),
                               m.group()),
                    _code_entity(line, m),
                    score,
                ))

    def sort_key(link: CorrelationLink):
        if isinstance(link.target, CodeTarget):
            return (-link.score, 1, "", link.target.line, link.target.start_col)
        return (-link.score, 0, link.target.block, 0, link.target.start)

    links.sort(key=sort_key)
    return links
