"""Block-to-code segment mapping and program assembly.

Assembly is a deterministic pre-order composition: a parent's own code may
hold one child-insertion marker where children splice in; without a marker
children append after the parent's own lines. Children indent one unit when
the parent's code opens a suite (last own line before the splice ends with
":"). Blocks flagged scope=global hoist before the parent's own code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import AmbiguousEdit, CompositionError, NotFound, RangeError
from .tree import ROOT_ID, PromptTree, SCOPE_GLOBAL


@dataclass(frozen=True)
class AssemblyConfig:
    marker: str = "# <<children>>"
    indent: str = "    "


DEFAULT_ASSEMBLY = AssemblyConfig()


@dataclass(frozen=True)
class Line:
    text: str
    owner: str
    own_index: int | None  # index into the owner's own_code lines, None for spliced


@dataclass
class CodeDocument:
    """Assembled program plus the block -> line-range index.

    Ranges are 1-based inclusive; an empty contribution at position n is
    (n, n-1). `parents`/`children` snapshot the tree shape so fold views and
    edit routing need no live tree.
    """

    text: str
    index: dict[str, tuple[int, int]]
    doc_version: int
    parents: dict[str, str | None] = field(default_factory=dict)
    children: dict[str, list[str]] = field(default_factory=dict)
    own_lines: dict[str, list[int]] = field(default_factory=dict)
    line_owner: list[str] = field(default_factory=list)

    @property
    def lines(self) -> list[str]:
        return self.text.split("\n")[:-1] if self.text else []

    def range_of(self, block: str) -> tuple[int, int]:
        try:
            return self.index[block]
        except KeyError:
            raise NotFound(f"block {block!r} not in document index") from None


def _opens_suite(lines: list[str]) -> bool:
    for line in reversed(lines):
        if line.strip():
            return line.rstrip().endswith(":")
    return False


def _compose(tree: PromptTree, node_id: str, cfg: AssemblyConfig):
    """Return (lines, relative index) for the subtree; index end-exclusive."""
    block = tree.nodes[node_id]
    own = block.segment.own_code
    own_list = own.split("\n") if own else []
    marker_at = [i for i, l in enumerate(own_list) if l.strip() == cfg.marker]
    if len(marker_at) > 1:
        raise CompositionError(
            f"block {node_id!r} has {len(marker_at)} child markers")

    hoisted = [c for c in block.children if tree.nodes[c].scope == SCOPE_GLOBAL]
    normal = [c for c in block.children if tree.nodes[c].scope != SCOPE_GLOBAL]

    lines: list[Line] = []
    index: dict[str, tuple[int, int]] = {}

    def place(child: str, indented: bool) -> None:
        sub_lines, sub_index = _compose(tree, child, cfg)
        offset = len(lines)
        for rec in sub_lines:
            if indented and rec.text:
                rec = Line(cfg.indent + rec.text, rec.owner, rec.own_index)
            lines.append(rec)
        for bid, (s, e) in sub_index.items():
            index[bid] = (s + offset, e + offset)

    def emit_own(indices) -> None:
        for i in indices:
            lines.append(Line(own_list[i], node_id, i))

    for child in hoisted:
        place(child, indented=False)

    if marker_at:
        m = marker_at[0]
        emit_own(range(m))
        suite = _opens_suite(own_list[:m])
        for child in normal:
            place(child, indented=suite)
        emit_own(range(m + 1, len(own_list)))
    else:
        emit_own(range(len(own_list)))
        suite = _opens_suite(own_list)
        for child in normal:
            place(child, indented=suite)

    index[node_id] = (0, len(lines))
    return lines, index


def assemble(
    tree: PromptTree,
    cfg: AssemblyConfig = DEFAULT_ASSEMBLY,
    doc_version: int = 0,
) -> CodeDocument:
    """Compose the whole tree into a CodeDocument. Pure in the tree snapshot."""
    recs, rel_index = _compose(tree, ROOT_ID, cfg)
    text = "\n".join(r.text for r in recs) + "\n" if recs else ""
    index = {bid: (s + 1, e) for bid, (s, e) in rel_index.items()}
    own_lines: dict[str, list[int]] = {}
    for lineno, rec in enumerate(recs, start=1):
        if rec.own_index is not None:
            own_lines.setdefault(rec.owner, []).append(lineno)
    doc = CodeDocument(
        text=text,
        index=index,
        doc_version=doc_version,
        parents={nid: tree.nodes[nid].parent for nid in tree.nodes},
        children={nid: list(tree.nodes[nid].children) for nid in tree.nodes},
        own_lines=own_lines,
        line_owner=[r.owner for r in recs],
    )
    for nid in tree.nodes:
        tree.nodes[nid].segment.line_range = index.get(nid)
    return doc


def composed_code(
    tree: PromptTree, node_id: str, cfg: AssemblyConfig = DEFAULT_ASSEMBLY
) -> str:
    """The code a block contributes including its descendants."""
    tree.block(node_id)
    recs, _ = _compose(tree, node_id, cfg)
    return "\n".join(r.text for r in recs)


@dataclass(frozen=True)
class FoldedRange:
    block: str
    first_line: int
    last_line: int
    placeholder: str


@dataclass(frozen=True)
class FoldView:
    selected: str
    path: tuple[str, ...]  # root-exclusive ancestor chain + selected, for the gutter
    folded: tuple[FoldedRange, ...]
    text: str


def visible_slice(doc: CodeDocument, selected: str) -> FoldView:
    """Selected block expanded; every unrelated sibling range folded to one line."""
    if selected not in doc.index:
        raise NotFound(f"block {selected!r} not in document")
    path = [selected]
    cur = doc.parents.get(selected)
    while cur is not None:
        path.append(cur)
        cur = doc.parents.get(cur)
    on_path = set(path)

    lines = doc.lines
    folded: list[FoldedRange] = []
    for ancestor in path[1:]:  # every ancestor incl. the virtual root
        for child in doc.children.get(ancestor, []):
            if child in on_path:
                continue
            first, last = doc.index[child]
            if last < first:
                continue
            head = lines[first - 1]
            pad = head[: len(head) - len(head.lstrip())]
            placeholder = f"{pad}# … [{child}] {last - first + 1} line(s) folded"
            folded.append(FoldedRange(child, first, last, placeholder))
    folded.sort(key=lambda f: f.first_line)

    out: list[str] = []
    skip_until = 0
    fold_at = {f.first_line: f for f in folded}
    for lineno, line in enumerate(lines, start=1):
        if lineno <= skip_until:
            continue
        hit = fold_at.get(lineno)
        if hit:
            out.append(hit.placeholder)
            skip_until = hit.last_line
        else:
            out.append(line)
    visible_text = "\n".join(out) + "\n" if out else ""
    gutter = tuple(reversed([p for p in path if p != ROOT_ID]))
    return FoldView(selected, gutter, tuple(folded), visible_text)


@dataclass(frozen=True)
class EditRouting:
    block: str
    doc: CodeDocument


def apply_code_edit(
    tree: PromptTree,
    doc: CodeDocument,
    first_line: int,
    last_line: int,
    new_text: str,
    cfg: AssemblyConfig = DEFAULT_ASSEMBLY,
) -> EditRouting:
    """Route a document line-range replacement to the owning block.

    The range must fall inside a single block's own lines; edits that span
    two blocks' own code raise AmbiguousEdit and must be split by the caller.
    """
    total = len(doc.lines)
    if not (1 <= first_line <= last_line <= total):
        raise RangeError(f"lines {first_line}..{last_line} outside document")
    owners = {doc.line_owner[i - 1] for i in range(first_line, last_line + 1)}
    if len(owners) != 1:
        raise AmbiguousEdit(
            f"edit spans the own code of {len(owners)} blocks: {sorted(owners)}")
    owner = owners.pop()

    owned = doc.own_lines[owner]
    own_code_lines = tree.block(owner).segment.own_code.split("\n")
    touched = [i for i, ln in enumerate(owned) if first_line <= ln <= last_line]

    prefix = ""
    for i in touched:
        own_text = own_code_lines[i]
        if own_text:
            doc_line = doc.lines[owned[i] - 1]
            prefix = doc_line[: len(doc_line) - len(own_text)]
            break

    new_lines = new_text.split("\n") if new_text else []
    stripped = [l[len(prefix):] if prefix and l.startswith(prefix) else l
                for l in new_lines]
    i0, i1 = touched[0], touched[-1]
    own_code_lines[i0:i1 + 1] = stripped
    tree.set_own_code(owner, "\n".join(own_code_lines), "code_edit")
    new_doc = assemble(tree, cfg, doc_version=doc.doc_version + 1)
    return EditRouting(owner, new_doc)


def export_sidecar(tree: PromptTree, doc: CodeDocument) -> dict:
    """Block -> line-range sidecar map for external tools."""
    return {
        "version": 1,
        "session_id": tree.session_id,
        "doc_version": doc.doc_version,
        "blocks": [
            {"id": nid, "first_line": rng[0], "last_line": rng[1]}
            for nid, rng in sorted(doc.index.items())
        ],
    }
