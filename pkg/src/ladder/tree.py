"""Prompt tree: blocks, ordering, supplements, revision history, serialization.

A tree has a hidden virtual root so every user block, including top-level
tasks, is an ordered child of something. Node ids are counter-based ("b1",
"b2", ...) and never reused within a session, which keeps replays
deterministic.
"""

from __future__ import annotations

import difflib
import json
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

from .errors import (
    CycleError,
    InputTooLarge,
    InvalidRelation,
    InvalidTarget,
    NotFound,
    ParseError,
)

ROOT_ID = "root"
MAX_PROMPT_BYTES = 8 * 1024

OP_KINDS = (
    "add", "edit", "delete", "duplicate", "move",
    "supplement", "list_steps", "code_edit",
)

SCOPE_LOCAL = "local"
SCOPE_GLOBAL = "global"


@dataclass(frozen=True)
class Supplement:
    """Extra detail for the LLM; never merged into the prompt text itself."""

    text: str
    target: tuple[int, int] | None  # None = whole block, else (start, end)
    created_at: int


@dataclass(frozen=True)
class Revision:
    seq: int
    op_kind: str
    prompt_before: str
    prompt_after: str
    code_before: str
    code_after: str
    timestamp: float
    raw_response: str | None = None  # kept when a generation response failed to parse


@dataclass
class SegmentRef:
    """A block's own code contribution; descendants compose in at assembly."""

    own_code: str = ""
    line_range: tuple[int, int] | None = None  # cached from the last assembly


@dataclass
class PromptBlock:
    id: str
    parent: str | None
    children: list[str] = field(default_factory=list)
    prompt: str = ""
    supplements: list[Supplement] = field(default_factory=list)
    folded: bool = False
    revisions: list[Revision] = field(default_factory=list)
    segment: SegmentRef = field(default_factory=SegmentRef)
    scope: str = SCOPE_LOCAL

    @property
    def badge_count(self) -> int:
        return len(self.supplements)


@dataclass(frozen=True)
class EditReceipt:
    block: str
    scope: tuple[str, ...]  # block + descendants at edit time, pre-order
    changed: bool
    prompt_before: str = ""
    prompt_after: str = ""
    kind: str = "edit"

    @property
    def description(self) -> str:
        return (
            f"Prompt of block [{self.block}] changed from "
            f"{self.prompt_before!r} to {self.prompt_after!r}."
        )


@dataclass(frozen=True)
class DeleteReceipt:
    removed: tuple[str, ...]
    scope: tuple[str, ...]  # former following siblings + ancestors
    removed_prompts: tuple[str, ...] = ()
    kind: str = "delete"

    @property
    def description(self) -> str:
        listing = ", ".join(
            f"[{i}] {p!r}" for i, p in zip(self.removed, self.removed_prompts)
        )
        return f"Deleted blocks: {listing}."


@dataclass(frozen=True)
class MoveReceipt:
    block: str
    old_parent: str
    new_parent: str
    depth_changed: bool
    scope: tuple[str, ...]  # moved subtree + old and new ancestor chains
    changed: bool = True
    kind: str = "move"

    @property
    def description(self) -> str:
        return (
            f"Block [{self.block}] moved from parent [{self.old_parent}] "
            f"to parent [{self.new_parent}]."
        )


@dataclass(frozen=True)
class SupplementReceipt:
    block: str
    scope: tuple[str, ...]
    text: str
    kind: str = "supplement"

    @property
    def description(self) -> str:
        return f"Block [{self.block}] received extra detail: {self.text!r}."


Receipt = EditReceipt | DeleteReceipt | MoveReceipt | SupplementReceipt


@dataclass(frozen=True)
class DiffHunk:
    tag: str  # replace | delete | insert
    a_start: int
    a_end: int
    b_start: int
    b_end: int
    a_lines: tuple[str, ...]
    b_lines: tuple[str, ...]


@dataclass(frozen=True)
class DiffView:
    block: str
    seq_a: int
    seq_b: int
    prompt_hunks: tuple[DiffHunk, ...]
    code_hunks: tuple[DiffHunk, ...]

    @property
    def empty(self) -> bool:
        return not self.prompt_hunks and not self.code_hunks


def _normalize_text(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def _check_prompt_size(prompt: str) -> None:
    if len(prompt.encode("utf-8")) > MAX_PROMPT_BYTES:
        raise InputTooLarge(f"prompt exceeds {MAX_PROMPT_BYTES} bytes")


def _line_hunks(a: str, b: str) -> tuple[DiffHunk, ...]:
    a_lines = a.split("\n") if a else []
    b_lines = b.split("\n") if b else []
    hunks = []
    for tag, i1, i2, j1, j2 in difflib.SequenceMatcher(
        a=a_lines, b=b_lines, autojunk=False
    ).get_opcodes():
        if tag == "equal":
            continue
        hunks.append(DiffHunk(tag, i1, i2, j1, j2,
                              tuple(a_lines[i1:i2]), tuple(b_lines[j1:j2])))
    return tuple(hunks)


class PromptTree:
    """Mutable prompt tree; single-writer per session."""

    def __init__(self, session_id: str = "", clock: Callable[[], float] = time.time):
        self.session_id = session_id
        self.clock = clock
        self.nodes: dict[str, PromptBlock] = {ROOT_ID: PromptBlock(ROOT_ID, None)}
        self._id_counter = 0

    # -- lookups ---------------------------------------------------------

    def block(self, node_id: str) -> PromptBlock:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NotFound(f"unknown block {node_id!r}") from None

    @property
    def root(self) -> PromptBlock:
        return self.nodes[ROOT_ID]

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def preorder(self, start: str = ROOT_ID) -> Iterator[str]:
        """Yield ids of the subtree rooted at `start` in pre-order."""
        block = self.block(start)
        yield block.id
        for child in list(block.children):
            yield from self.preorder(child)

    def descendants(self, node_id: str) -> list[str]:
        return [i for i in self.preorder(node_id)][1:]

    def ancestors(self, node_id: str) -> list[str]:
        """Ancestor chain, root first, excluding the node itself."""
        chain = []
        cur = self.block(node_id).parent
        while cur is not None:
            chain.append(cur)
            cur = self.nodes[cur].parent
        chain.reverse()
        return chain

    def depth(self, node_id: str) -> int:
        return len(self.ancestors(node_id))

    def is_descendant(self, node_id: str, of: str) -> bool:
        return of in self.ancestors(node_id)

    def scope_of(self, node_id: str) -> tuple[str, ...]:
        """The node plus its descendants, pre-order."""
        return tuple(self.preorder(node_id))

    def _new_id(self) -> str:
        self._id_counter += 1
        return f"b{self._id_counter}"

    def _revise(
        self,
        block: PromptBlock,
        op_kind: str,
        prompt_after: str | None = None,
        code_after: str | None = None,
        raw_response: str | None = None,
    ) -> Revision:
        if op_kind not in OP_KINDS:
            raise ValueError(f"bad op_kind {op_kind!r}")
        prev_prompt = block.revisions[-1].prompt_after if block.revisions else ""
        prev_code = block.revisions[-1].code_after if block.revisions else ""
        rev = Revision(
            seq=len(block.revisions) + 1,
            op_kind=op_kind,
            prompt_before=prev_prompt,
            prompt_after=block.prompt if prompt_after is None else prompt_after,
            code_before=prev_code,
            code_after=block.segment.own_code if code_after is None else code_after,
            timestamp=float(self.clock()),
            raw_response=raw_response,
        )
        block.revisions.append(rev)
        return rev

    # -- block operations -------------------------------------------------

    def add_block(
        self,
        anchor: str,
        relation: str,
        prompt: str = "",
        *,
        own_code: str = "",
        op_kind: str = "add",
        node_id: str | None = None,
    ) -> str:
        """Insert a new block as sibling-after-anchor or last child of anchor."""
        anchor_block = self.block(anchor)
        prompt = _normalize_text(prompt)
        _check_prompt_size(prompt)
        if relation == "sibling":
            if anchor == ROOT_ID:
                raise InvalidRelation("the virtual root has no siblings")
            parent = self.nodes[anchor_block.parent]
            position = parent.children.index(anchor) + 1
        elif relation == "child":
            parent = anchor_block
            position = len(parent.children)
        else:
            raise InvalidRelation(f"unknown relation {relation!r}")
        new_id = node_id or self._new_id()
        block = PromptBlock(new_id, parent.id, prompt=prompt,
                            segment=SegmentRef(own_code=_normalize_text(own_code)))
        self.nodes[new_id] = block
        parent.children.insert(position, new_id)
        self._revise(block, op_kind)
        return new_id

    def edit_prompt(self, node_id: str, new_prompt: str) -> EditReceipt:
        block = self.block(node_id)
        new_prompt = _normalize_text(new_prompt)
        _check_prompt_size(new_prompt)
        if new_prompt == block.prompt:
            return EditReceipt(node_id, (), changed=False,
                               prompt_before=block.prompt, prompt_after=new_prompt)
        before = block.prompt
        block.prompt = new_prompt
        self._revise(block, "edit")
        return EditReceipt(node_id, self.scope_of(node_id), changed=True,
                           prompt_before=before, prompt_after=new_prompt)

    def delete_block(self, node_id: str) -> DeleteReceipt:
        block = self.block(node_id)
        if node_id == ROOT_ID:
            raise InvalidTarget("cannot delete the virtual root")
        removed = tuple(self.preorder(node_id))
        removed_prompts = tuple(self.nodes[i].prompt for i in removed)
        parent = self.nodes[block.parent]
        idx = parent.children.index(node_id)
        following = tuple(parent.children[idx + 1:])
        ancestors = tuple(a for a in self.ancestors(node_id) if a != ROOT_ID)
        parent.children.remove(node_id)
        for i in removed:
            del self.nodes[i]
        scope = tuple(dict.fromkeys(following + ancestors))
        return DeleteReceipt(removed, scope, removed_prompts)

    def duplicate_block(self, node_id: str) -> str:
        """Deep-copy a subtree next to the original; fresh ids, fresh history."""
        block = self.block(node_id)
        if node_id == ROOT_ID:
            raise InvalidTarget("cannot duplicate the virtual root")

        def copy(src: PromptBlock, parent_id: str) -> str:
            new_id = self._new_id()
            dup = PromptBlock(
                new_id, parent_id,
                prompt=src.prompt,
                supplements=list(src.supplements),
                folded=src.folded,
                segment=SegmentRef(own_code=src.segment.own_code),
                scope=src.scope,
            )
            self.nodes[new_id] = dup
            self._revise(dup, "duplicate")
            for child in src.children:
                dup.children.append(copy(self.nodes[child], new_id))
            return new_id

        copy_id = copy(block, block.parent)
        parent = self.nodes[block.parent]
        parent.children.insert(parent.children.index(node_id) + 1, copy_id)
        return copy_id

    def move_block(self, node_id: str, new_parent: str, position: int) -> MoveReceipt:
        block = self.block(node_id)
        target = self.block(new_parent)
        if node_id == ROOT_ID:
            raise InvalidTarget("cannot move the virtual root")
        if new_parent == node_id or self.is_descendant(new_parent, node_id):
            raise CycleError(f"moving {node_id!r} under {new_parent!r} creates a cycle")
        if not 0 <= position <= len(target.children):
            raise IndexError(f"position {position} out of range")
        old_parent = self.nodes[block.parent]
        old_index = old_parent.children.index(node_id)
        if old_parent.id == new_parent and position in (old_index, old_index + 1):
            return MoveReceipt(node_id, old_parent.id, new_parent,
                               depth_changed=False, scope=(), changed=False)
        old_ancestors = tuple(a for a in self.ancestors(node_id) if a != ROOT_ID)
        old_depth = self.depth(node_id)
        old_parent.children.remove(node_id)
        if old_parent.id == new_parent and position > old_index:
            position -= 1
        target.children.insert(position, node_id)
        block.parent = new_parent
        new_ancestors = tuple(a for a in self.ancestors(node_id) if a != ROOT_ID)
        self._revise(block, "move")
        scope = tuple(dict.fromkeys(
            self.scope_of(node_id) + old_ancestors + new_ancestors))
        return MoveReceipt(node_id, old_parent.id, new_parent,
                           depth_changed=self.depth(node_id) != old_depth,
                           scope=scope)

    def add_supplement(
        self, node_id: str, text: str, target: tuple[int, int] | None = None
    ) -> Supplement:
        block = self.block(node_id)
        if target is not None:
            start, end = target
            if not (0 <= start <= end <= len(block.prompt)):
                from .errors import RangeError
                raise RangeError(
                    f"supplement target {target} outside prompt of {node_id!r}")
        supp = Supplement(_normalize_text(text), target, len(block.supplements) + 1)
        block.supplements.append(supp)
        self._revise(block, "supplement")
        return supp

    def supplement_receipt(self, node_id: str, text: str) -> SupplementReceipt:
        return SupplementReceipt(node_id, self.scope_of(node_id), text)

    def set_folded(self, node_id: str, folded: bool) -> None:
        self.block(node_id).folded = bool(folded)

    def set_own_code(
        self,
        node_id: str,
        own_code: str,
        op_kind: str,
        *,
        raw_response: str | None = None,
    ) -> bool:
        """Replace a block's own code, recording a revision. No-op if unchanged."""
        block = self.block(node_id)
        own_code = _normalize_text(own_code)
        if own_code == block.segment.own_code and raw_response is None:
            return False
        block.segment.own_code = own_code
        self._revise(block, op_kind, raw_response=raw_response)
        return True

    # -- history ----------------------------------------------------------

    def revision(self, node_id: str, seq: int) -> Revision:
        for rev in self.block(node_id).revisions:
            if rev.seq == seq:
                return rev
        raise NotFound(f"block {node_id!r} has no revision {seq}")

    def diff_revisions(self, node_id: str, a: int, b: int) -> DiffView:
        rev_a, rev_b = self.revision(node_id, a), self.revision(node_id, b)
        return DiffView(
            node_id, a, b,
            _line_hunks(rev_a.prompt_after, rev_b.prompt_after),
            _line_hunks(rev_a.code_after, rev_b.code_after),
        )

    def replay_state(self, node_id: str) -> tuple[str, str]:
        """Fold the revision chain from an empty block; checks chain links."""
        prompt, code = "", ""
        for rev in self.block(node_id).revisions:
            if rev.prompt_before != prompt or rev.code_before != code:
                raise AssertionError(
                    f"revision chain of {node_id!r} broken at seq {rev.seq}")
            prompt, code = rev.prompt_after, rev.code_after
        return prompt, code

    # -- invariants ---------------------------------------------------------

    def check_invariants(self) -> None:
        root = self.nodes.get(ROOT_ID)
        assert root is not None and root.parent is None
        seen: set[str] = set()
        stack = [ROOT_ID]
        while stack:
            nid = stack.pop()
            assert nid not in seen, f"{nid} reachable twice"
            seen.add(nid)
            node = self.nodes[nid]
            assert len(set(node.children)) == len(node.children)
            for child in node.children:
                assert child in self.nodes, f"dangling child {child}"
                assert self.nodes[child].parent == nid, f"parent link broken at {child}"
                stack.append(child)
        assert seen == set(self.nodes), "unreachable nodes exist"
        for node in self.nodes.values():
            seqs = [r.seq for r in node.revisions]
            assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)
            if node.id != ROOT_ID:
                current = (node.prompt, node.segment.own_code)
                assert self.replay_state(node.id) == current, \
                    f"revision replay mismatch for {node.id}"

    # -- serialization ------------------------------------------------------

    def to_document(self) -> dict:
        nodes = []
        for nid in self.preorder():
            n = self.nodes[nid]
            nodes.append({
                "id": n.id,
                "parent": n.parent,
                "child_order": list(n.children),
                "prompt": n.prompt,
                "supplements": [
                    {
                        "text": s.text,
                        "target": None if s.target is None
                        else {"start": s.target[0], "end": s.target[1]},
                        "created_at": s.created_at,
                    }
                    for s in n.supplements
                ],
                "folded": n.folded,
                "revisions": [
                    {k: v for k, v in {
                        "seq": r.seq,
                        "op_kind": r.op_kind,
                        "prompt_before": r.prompt_before,
                        "prompt_after": r.prompt_after,
                        "code_before": r.code_before,
                        "code_after": r.code_after,
                        "timestamp": r.timestamp,
                        "raw_response": r.raw_response,
                    }.items() if not (k == "raw_response" and v is None)}
                    for r in n.revisions
                ],
                "segment_text": n.segment.own_code,
                "scope": n.scope,
            })
        return {
            "version": 1,
            "session_id": self.session_id,
            "next_node_id": self._id_counter + 1,
            "nodes": nodes,
        }

    def serialize(self) -> bytes:
        """Canonical bytes: sorted keys, two-space indent, LF, trailing newline."""
        text = json.dumps(self.to_document(), sort_keys=True, indent=2,
                          ensure_ascii=False)
        return (text + "\n").encode("utf-8")


def _expect(mapping: dict, key: str, types, path: str):
    if key not in mapping:
        raise ParseError(f"missing field {key!r}", path=path)
    value = mapping[key]
    if not isinstance(value, types):
        raise ParseError(f"field {key!r} has wrong type", path=f"{path}.{key}")
    return value


def from_document(doc: dict, clock: Callable[[], float] = time.time) -> PromptTree:
    """Validate a SessionDocument structure and rebuild the tree."""
    if not isinstance(doc, dict):
        raise ParseError("document must be an object", path="$")
    if doc.get("version") != 1:
        raise ParseError("unsupported document version", path="$.version")
    session_id = _expect(doc, "session_id", str, "$")
    raw_nodes = _expect(doc, "nodes", list, "$")
    tree = PromptTree(session_id, clock=clock)
    tree.nodes.clear()

    by_id: dict[str, dict] = {}
    for i, raw in enumerate(raw_nodes):
        path = f"$.nodes[{i}]"
        if not isinstance(raw, dict):
            raise ParseError("node must be an object", path=path)
        nid = _expect(raw, "id", str, path)
        if nid in by_id:
            raise ParseError(f"duplicate node id {nid!r}", path=path)
        by_id[nid] = raw

    if ROOT_ID not in by_id:
        raise ParseError("document has no root node", path="$.nodes")

    for i, raw in enumerate(raw_nodes):
        path = f"$.nodes[{i}]"
        nid = raw["id"]
        parent = raw.get("parent")
        if nid == ROOT_ID:
            if parent is not None:
                raise ParseError("root must have null parent", path=f"{path}.parent")
        elif not isinstance(parent, str) or parent not in by_id:
            raise ParseError(f"unknown parent {parent!r}", path=f"{path}.parent")
        children = _expect(raw, "child_order", list, path)
        supplements = []
        for j, s in enumerate(_expect(raw, "supplements", list, path)):
            spath = f"{path}.supplements[{j}]"
            target = s.get("target")
            supplements.append(Supplement(
                _expect(s, "text", str, spath),
                None if target is None else (target["start"], target["end"]),
                _expect(s, "created_at", int, spath),
            ))
        revisions = []
        for j, r in enumerate(_expect(raw, "revisions", list, path)):
            rpath = f"{path}.revisions[{j}]"
            op_kind = _expect(r, "op_kind", str, rpath)
            if op_kind not in OP_KINDS:
                raise ParseError(f"unknown op_kind {op_kind!r}", path=rpath)
            revisions.append(Revision(
                _expect(r, "seq", int, rpath),
                op_kind,
                _expect(r, "prompt_before", str, rpath),
                _expect(r, "prompt_after", str, rpath),
                _expect(r, "code_before", str, rpath),
                _expect(r, "code_after", str, rpath),
                float(_expect(r, "timestamp", (int, float), rpath)),
                r.get("raw_response"),
            ))
        block = PromptBlock(
            nid, parent,
            children=[c for c in children],
            prompt=_expect(raw, "prompt", str, path),
            supplements=supplements,
            folded=bool(_expect(raw, "folded", bool, path)),
            revisions=revisions,
            segment=SegmentRef(own_code=_expect(raw, "segment_text", str, path)),
            scope=raw.get("scope", SCOPE_LOCAL),
        )
        tree.nodes[nid] = block

    for nid, raw in by_id.items():
        for child in raw["child_order"]:
            if child not in by_id:
                raise ParseError(f"unknown child {child!r}",
                                 path=f"$.nodes[{nid}].child_order")
            if by_id[child].get("parent") != nid:
                raise ParseError(
                    f"child {child!r} does not point back to {nid!r}",
                    path=f"$.nodes[{nid}].child_order")

    next_id = doc.get("next_node_id")
    numeric = [int(n[1:]) for n in by_id if n.startswith("b") and n[1:].isdigit()]
    tree._id_counter = max(
        [next_id - 1 if isinstance(next_id, int) else 0] + numeric)
    try:
        tree.check_invariants()
    except AssertionError as exc:
        raise ParseError(f"inconsistent document: {exc}", path="$.nodes") from None
    return tree


def deserialize(data: bytes | str, clock: Callable[[], float] = time.time) -> PromptTree:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", path="$") from None
    return from_document(doc, clock=clock)
