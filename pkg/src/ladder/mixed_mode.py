"""Mixed-mode prompt analysis.

Prompts interleave natural language with code syntax. This module splits a
prompt into covering NL/CODE spans with a lexical heuristic (no grammar), and
tokenizes identifiers for auto-completion and semantic linking.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import InputTooLarge

MAX_PROMPT_BYTES = 8 * 1024

NL = "NL"
CODE = "CODE"

# Keywords that can open a code statement when leading a line.
STATEMENT_KEYWORDS = frozenset({
    "for", "while", "if", "elif", "else", "def", "class", "with", "try",
    "except", "finally", "return", "yield", "import", "from", "raise",
    "assert", "del", "global", "lambda",
})

# Full set filtered out of identifier extraction.
RESERVED_WORDS = STATEMENT_KEYWORDS | frozenset({
    "in", "not", "and", "or", "is", "as", "pass", "break", "continue",
    "None", "True", "False",
})

_IDENT_RE = re.compile(r"[A-Za-z_]\w*")
# A call, possibly dotted and possibly leading with '.', with one paren level.
_CALL_RE = re.compile(r"\.?[A-Za-z_][\w.]*\((?:[^()]|\([^()]*\))*\)")
# Dotted access without a call: df.columns, sns.size, bare .predict
_DOTTED_RE = re.compile(r"\.?[A-Za-z_]\w*(?:\.[A-Za-z_]\w*)+|\.[A-Za-z_]\w*")
# Subscripts: df["col"], data[0]
_SUBSCRIPT_RE = re.compile(r"\.?[A-Za-z_][\w.]*\[[^\[\]]*\]")
# Inline assignment fragment: x = 1, name = load()
_ASSIGN_RE = re.compile(
    r"[A-Za-z_]\w*\s*=\s*(?:\.?[A-Za-z_][\w.]*|[-+]?\d[\w.]*|\"[^\"]*\"|'[^']*')"
)
# Whole-line assignment; targets may be tuples, attributes, or subscripts.
_ASSIGN_TARGET = r"[A-Za-z_][\w.]*(?:\[[^\[\]]*\])?"
_ASSIGN_LINE_RE = re.compile(
    rf"^\s*{_ASSIGN_TARGET}(?:\s*,\s*{_ASSIGN_TARGET})*\s*(?:=|\+=|-=|\*=|/=)\s*\S"
)
_IMPORT_TAIL_RE = re.compile(r"^[\w.,\s*()]+$")
_OPERATOR_CHARS = set("=()[].{}:<>+*/%\"'")


@dataclass(frozen=True)
class MixedSpan:
    start: int
    end: int
    kind: str  # NL or CODE


@dataclass(frozen=True)
class IdentifierToken:
    text: str
    normalized: tuple[str, ...] = field(default=())

    @staticmethod
    def of(text: str) -> "IdentifierToken":
        return IdentifierToken(text, tuple(normalize_pieces(text)))


_CAMEL_RE = re.compile(r"[A-Z]+(?![a-z])|[A-Z][a-z]*|[a-z]+")


def normalize_pieces(text: str) -> list[str]:
    """Lowercase word pieces: split on '_'/camel boundaries, digits stripped."""
    pieces: list[str] = []
    for chunk in re.split(r"[^0-9A-Za-z]+", text):
        for piece in _CAMEL_RE.findall(chunk):
            piece = re.sub(r"\d+", "", piece).lower()
            if piece:
                pieces.append(piece)
    return pieces


def _keyword_led_code(stripped: str, known: frozenset[str]) -> bool:
    m = re.match(r"([A-Za-z_]\w*)\s*(.*)", stripped)
    if not m or m.group(1) not in STATEMENT_KEYWORDS:
        return False
    head = [m.group(1)]
    tail = m.group(2)
    if stripped.rstrip().endswith(":"):
        return True
    if head[0] in ("import", "from") and tail and _IMPORT_TAIL_RE.match(tail):
        # "from sklearn import tree" is code; "from the table drop nulls" is not
        return "import" in tail or "." in tail or " " not in tail.strip()
    if any(ch in _OPERATOR_CHARS for ch in tail):
        return True
    tokens = _IDENT_RE.findall(tail)
    return bool(tokens) and all(t in known for t in tokens)


def classify_spans(
    prompt: str,
    known_identifiers: frozenset[str] | set[str] = frozenset(),
) -> list[MixedSpan]:
    """Split a prompt into sorted, non-overlapping NL/CODE spans covering it.

    Offsets are unicode character offsets into the prompt. Pure function.
    """
    if len(prompt.encode("utf-8")) > MAX_PROMPT_BYTES:
        raise InputTooLarge(f"prompt exceeds {MAX_PROMPT_BYTES} bytes")
    if not prompt:
        return []
    known = frozenset(known_identifiers)
    code = [False] * len(prompt)

    pos = 0
    for line in prompt.split("\n"):
        start, end = pos, pos + len(line)
        stripped = line.strip()
        if stripped and (
            _keyword_led_code(stripped, known) or _ASSIGN_LINE_RE.match(line)
        ):
            for i in range(start, end):
                code[i] = True
        else:
            for pattern in (_CALL_RE, _SUBSCRIPT_RE, _DOTTED_RE, _ASSIGN_RE):
                for m in pattern.finditer(line):
                    for i in range(start + m.start(), start + m.end()):
                        code[i] = True
            if known:
                for m in _IDENT_RE.finditer(line):
                    if m.group() in known:
                        for i in range(start + m.start(), start + m.end()):
                            code[i] = True
        pos = end + 1

    spans: list[MixedSpan] = []
    run_start = 0
    for i in range(1, len(prompt) + 1):
        if i == len(prompt) or code[i] != code[run_start]:
            spans.append(MixedSpan(run_start, i, CODE if code[run_start] else NL))
            run_start = i
    return spans


def extract_identifiers(
    prompt: str,
    known_identifiers: frozenset[str] | set[str] = frozenset(),
) -> list[IdentifierToken]:
    """Identifier tokens in CODE spans, plus NL words naming known identifiers."""
    known = frozenset(known_identifiers)
    out: list[IdentifierToken] = []
    for span in classify_spans(prompt, known):
        text = prompt[span.start:span.end]
        for m in _IDENT_RE.finditer(text):
            tok = m.group()
            if span.kind == CODE:
                if tok not in RESERVED_WORDS:
                    out.append(IdentifierToken.of(tok))
            elif tok in known:
                out.append(IdentifierToken.of(tok))
    return out


def code_identifiers(code: str) -> list[IdentifierToken]:
    """Identifier tokens of a code segment (no span classification)."""
    return [
        IdentifierToken.of(m.group())
        for m in _IDENT_RE.finditer(code)
        if m.group() not in RESERVED_WORDS
    ]
