"""Generation orchestration over the prompt tree.

Covers per-block generation (bottom-up, with pure-code pass-through), parsing
of tagged-fence responses, the sequential Propagate-Changes chain, List Steps,
recommendations, and both auto-completion flavours. All paths are
deterministic under the mock backend, so a recorded session replays to a
byte-identical document.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

from .cache import CacheHit, GenCache
from .errors import (
    ChainAborted,
    LadderError,
    PreconditionError,
    ResponseFormatError,
)
from .gateway import GenerationParams, MockBackend, TemplateStore
from .mixed_mode import CODE, classify_spans, code_identifiers, extract_identifiers
from .segments import DEFAULT_ASSEMBLY, AssemblyConfig, composed_code
from .tree import ROOT_ID, PromptTree, Receipt


def _digest(code: str) -> str:
    if not code:
        return "-"
    return hashlib.sha256(code.encode("utf-8")).hexdigest()[:8]


def _one_line(text: str) -> str:
    return text.replace("\n", "\\n")


def tree_context(tree: PromptTree, focus: str) -> str:
    """Canonical serialization of the tree as seen from one block.

    Shows the ancestor path with all siblings along it, and the focus block's
    full subtree; every line carries prompt, supplement details, and an
    own-code digest. Independent of map iteration order.
    """
    tree.block(focus)
    path = set(tree.ancestors(focus)) | {focus}
    subtree = set(tree.preorder(focus))
    lines: list[str] = []

    def visit(node_id: str, depth: int) -> None:
        for child in tree.nodes[node_id].children:
            if node_id not in path and child not in subtree:
                continue
            block = tree.nodes[child]
            parts = [f"{'  ' * depth}- [{child}] {_one_line(block.prompt)}"]
            if block.supplements:
                parts.append(
                    "details: " + "; ".join(_one_line(s.text)
                                            for s in block.supplements))
            parts.append(f"code: {_digest(block.segment.own_code)}")
            if child == focus:
                parts.append("focus")
            lines.append(" | ".join(parts))
            if child in path or child in subtree:
                visit(child, depth + 1)

    visit(ROOT_ID, 0)
    return "\n".join(lines)


@dataclass(frozen=True)
class ParsedResponse:
    segments: dict[str, str]
    warnings: tuple[str, ...] = ()


def parse_tree_response(response: str) -> ParsedResponse:
    """Parse id-tagged fenced segments; prose and untagged fences are ignored."""
    segments: dict[str, str] = {}
    warnings: list[str] = []
    tag: str | None = None
    in_prose_fence = False
    buf: list[str] = []
    for line in response.split("\n"):
        stripped = line.strip()
        if tag is not None:
            if stripped == "```":
                segments[tag] = "\n".join(buf)
                tag, buf = None, []
            else:
                buf.append(line)
        elif in_prose_fence:
            if stripped == "```":
                in_prose_fence = False
        elif stripped.startswith("```block:"):
            tag = stripped[len("```block:"):].strip()
            if not tag:
                raise ResponseFormatError("empty block tag", raw=response)
            if tag in segments:
                raise ResponseFormatError(f"duplicate tag {tag!r}", raw=response)
        elif stripped.startswith("```"):
            in_prose_fence = True
            warnings.append(f"ignored untagged fence {stripped[3:] or '```'!r}")
    if tag is not None:
        raise ResponseFormatError("unterminated fenced segment", raw=response)
    return ParsedResponse(segments, tuple(warnings))


def _parse_steps(response: str) -> tuple[list[tuple[str, str]], str | None]:
    """Parse list-steps fences into (prompt, code) pairs plus the residual."""
    steps: list[tuple[str, str]] = []
    residual: str | None = None
    kind: str | None = None
    buf: list[str] = []
    for line in response.split("\n"):
        stripped = line.strip()
        if kind is not None:
            if stripped == "```":
                body = buf
                if kind == "step":
                    seps = [i for i, l in enumerate(body) if l.strip() == "---"]
                    if not seps:
                        raise ResponseFormatError(
                            "step fence lacks a --- separator", raw=response)
                    prompt = "\n".join(body[:seps[0]]).strip()
                    code = "\n".join(body[seps[0] + 1:])
                    steps.append((prompt, code))
                elif kind == "residual":
                    if residual is not None:
                        raise ResponseFormatError("two residual fences", raw=response)
                    residual = "\n".join(body)
                kind, buf = None, []
            else:
                buf.append(line)
        elif stripped in ("```step", "```residual"):
            kind = stripped[3:]
        # prose between fences is ignored
    if kind is not None:
        raise ResponseFormatError("unterminated fenced segment", raw=response)
    return steps, residual


@dataclass
class PropagationStep:
    block: str
    reason: str  # edited | descendant | consistency
    outcome: str | None = None  # changed | unchanged


@dataclass
class PropagationPlan:
    steps: list[PropagationStep]
    aborted_at: int | None = None

    @property
    def visited(self) -> list[str]:
        return [s.block for s in self.steps if s.outcome is not None]


@dataclass
class GenerationOutcome:
    block: str
    updated: dict[str, str] = field(default_factory=dict)
    response: str | None = None
    cache_hit: str | None = None  # "exact" when replayed from the cache
    suggestion: CacheHit | None = None  # semantic near-hit, surfaced only
    warnings: list[str] = field(default_factory=list)


def _is_pure_code(prompt: str) -> bool:
    spans = classify_spans(prompt)
    has_code = any(s.kind == CODE for s in spans)
    return has_code and all(
        s.kind == CODE or prompt[s.start:s.end].strip() == "" for s in spans)


class CodeGenerator:
    """Drives all LLM-backed operations for one session's tree."""

    def __init__(
        self,
        backend,
        templates: TemplateStore | None = None,
        cache: GenCache | None = None,
        assembly: AssemblyConfig = DEFAULT_ASSEMBLY,
        params: GenerationParams = GenerationParams(),
    ):
        self.backend = backend
        self.templates = templates or TemplateStore()
        self.cache = cache
        self.assembly = assembly
        self.params = params

    # -- backend plumbing --------------------------------------------------

    def _call(self, template: str, slots: dict[str, str],
              block: str) -> tuple[str, GenerationOutcome]:
        outcome = GenerationOutcome(block)
        request = self.templates.render(template, slots)
        key = request.canonical_key
        query_text = "\n".join(f"{k}: {v}" for k, v in sorted(slots.items()))
        if self.cache is not None:
            hit = self.cache.lookup(key, query_text)
            if hit is not None and hit.exact:
                outcome.cache_hit = "exact"
                return hit.exchange.response, outcome
            outcome.suggestion = hit
        exchange = self.backend.complete(request, self.params)
        if self.cache is not None:
            self.cache.insert(
                self.cache.make_entry(key, query_text, exchange, block))
        return exchange.response, outcome

    def _supplement_text(self, tree: PromptTree, block_id: str) -> str:
        supplements = tree.block(block_id).supplements
        if not supplements:
            return "-"
        return "; ".join(_one_line(s.text) for s in supplements)

    # -- operations ---------------------------------------------------------

    def generate_block(self, tree: PromptTree, block_id: str,
                       op_kind: str = "add") -> GenerationOutcome:
        """Generate own code for a block (and empty descendants) bottom-up."""
        block = tree.block(block_id)
        if not block.prompt.strip():
            raise PreconditionError(f"block {block_id!r} has an empty prompt")

        if _is_pure_code(block.prompt):
            # code-syntax prompts pass through verbatim, no backend call
            code = block.prompt
            marker = self.assembly.marker
            if code.rstrip().endswith(":") and marker not in code:
                code = f"{code}\n{marker}"
            tree.set_own_code(block_id, code, op_kind)
            return GenerationOutcome(block_id, updated={block_id: code})

        slots = {
            "tree": tree_context(tree, block_id),
            "focus": block_id,
            "prompt": _one_line(block.prompt),
            "supplements": self._supplement_text(tree, block_id),
        }
        response, outcome = self._call("generate_block", slots, block_id)
        outcome.response = response
        try:
            parsed = parse_tree_response(response)
        except ResponseFormatError:
            tree.set_own_code(block_id, block.segment.own_code, op_kind,
                              raw_response=response)
            raise
        outcome.warnings.extend(parsed.warnings)

        descendants = set(tree.descendants(block_id))
        if block_id not in parsed.segments:
            tree.set_own_code(block_id, block.segment.own_code, op_kind,
                              raw_response=response)
            raise ResponseFormatError(
                f"response has no segment for focus block {block_id!r}",
                raw=response)
        for bid, code in parsed.segments.items():
            if bid == block_id:
                continue
            if bid not in descendants:
                outcome.warnings.append(f"dropped segment for unknown block {bid!r}")
            elif tree.block(bid).segment.own_code:
                outcome.warnings.append(
                    f"kept existing code of {bid!r}; generation may not overwrite")
            else:
                tree.set_own_code(bid, code, op_kind)
                outcome.updated[bid] = code
        tree.set_own_code(block_id, parsed.segments[block_id], op_kind)
        outcome.updated[block_id] = parsed.segments[block_id]
        return outcome

    def propagate_changes(
        self,
        tree: PromptTree,
        receipt: Receipt,
        on_step: Callable[[PropagationStep, int, int], None] | None = None,
        cancelled: Callable[[], bool] | None = None,
    ) -> PropagationPlan:
        """Sequentially revisit the receipt scope in pre-order, feeding each
        step the outputs of the previous ones. Applied steps survive an abort;
        a cancel between steps keeps the applied prefix and marks the plan."""
        scope = {nid for nid in receipt.scope if nid in tree}
        if not scope:
            raise PreconditionError("propagation scope is empty")
        primary = getattr(receipt, "block", None)
        order = [nid for nid in tree.preorder() if nid in scope]

        def reason(nid: str) -> str:
            if nid == primary:
                return "edited"
            if primary is not None and primary in tree and \
                    tree.is_descendant(nid, primary):
                return "descendant"
            return "consistency"

        plan = PropagationPlan([PropagationStep(nid, reason(nid)) for nid in order])
        history: list[str] = []
        for i, step in enumerate(plan.steps):
            if cancelled is not None and cancelled():
                plan.aborted_at = i
                break
            block = tree.block(step.block)
            if receipt.kind == "supplement" and step.block == primary:
                slots = {
                    "tree": tree_context(tree, step.block),
                    "focus": step.block,
                    "prompt": _one_line(block.prompt),
                    "supplements": self._supplement_text(tree, step.block),
                    "code": block.segment.own_code,
                }
                template = "supplement_merge"
            else:
                slots = {
                    "tree": tree_context(tree, step.block),
                    "focus": step.block,
                    "change": receipt.description,
                    "history": "\n".join(history) or "-",
                    "code": block.segment.own_code,
                }
                template = "propagate_changes"
            try:
                response, _ = self._call(template, slots, step.block)
                if response.strip() == "unchanged":
                    step.outcome = "unchanged"
                else:
                    parsed = parse_tree_response(response)
                    if step.block not in parsed.segments:
                        raise ResponseFormatError(
                            f"step response lacks a segment for {step.block!r}",
                            raw=response)
                    changed = tree.set_own_code(
                        step.block, parsed.segments[step.block], receipt.kind)
                    step.outcome = "changed" if changed else "unchanged"
            except LadderError as exc:
                plan.aborted_at = i
                raise ChainAborted(
                    f"propagation aborted at step {i} ({step.block}): {exc}",
                    plan=plan, cause=exc) from exc
            history.append(
                f"[{step.block}] " + (
                    "unchanged" if step.outcome == "unchanged"
                    else _one_line(tree.block(step.block).segment.own_code)))
            if on_step is not None:
                on_step(step, i, len(plan.steps))
        return plan

    def list_steps(self, tree: PromptTree, block_id: str) -> list[str]:
        """Split a block's composed code into ordered child step blocks."""
        tree.block(block_id)
        composed = composed_code(tree, block_id, self.assembly)
        meaningful = [l for l in composed.split("\n")
                      if l.strip() and l.strip() != self.assembly.marker]
        if not meaningful:
            raise PreconditionError(f"block {block_id!r} has no code to summarize")
        slots = {"focus": block_id, "code": composed}
        response, _ = self._call("list_steps", slots, block_id)
        steps, residual = _parse_steps(response)
        if not steps:
            raise ResponseFormatError("response contained no steps", raw=response)
        new_ids = []
        for prompt, code in steps:
            new_ids.append(tree.add_block(
                block_id, "child", prompt, own_code=code, op_kind="list_steps"))
        tree.set_own_code(
            block_id,
            residual if residual is not None else self.assembly.marker,
            "list_steps")
        return new_ids

    def recommend_next(self, tree: PromptTree,
                       block_id: str) -> list[tuple[str, float]]:
        """Up to five next-step suggestions, sorted by relevance score."""
        tree.block(block_id)
        slots = {"tree": tree_context(tree, block_id)}
        response, _ = self._call("recommend", slots, block_id)
        suggestions: list[tuple[str, float]] = []
        for line in response.split("\n"):
            if "|" not in line:
                continue
            score_text, text = line.split("|", 1)
            try:
                score = float(score_text.strip())
            except ValueError:
                continue
            suggestions.append((text.strip(), min(max(score, 0.0), 1.0)))
        suggestions.sort(key=lambda s: -s[1])
        return suggestions[:5]

    def autocomplete_sentence(self, tree: PromptTree, block_id: str,
                              draft: str) -> str:
        """Suffix completing the draft; accepting appends it verbatim."""
        if not draft:
            raise PreconditionError("draft is empty")
        tree.block(block_id)
        slots = {"tree": tree_context(tree, block_id), "draft": draft}
        response, _ = self._call("autocomplete_sentence", slots, block_id)
        completion = response.rstrip("\n")
        if completion.startswith(draft):
            completion = completion[len(draft):]
        return completion

    def autocomplete_word(self, tree: PromptTree, block_id: str,
                          prefix: str) -> list[str]:
        """Identifier candidates from the whole tree; no backend call.

        Ranked by tree proximity to the focus block, then frequency.
        """
        if not prefix:
            raise PreconditionError("prefix is empty")
        tree.block(block_id)
        known = frozenset(
            tok.text
            for node in tree.nodes.values()
            for tok in code_identifiers(node.segment.own_code))
        occurrences: list[tuple[str, str]] = []
        for nid, node in tree.nodes.items():
            if nid == ROOT_ID:
                continue
            for tok in extract_identifiers(node.prompt, known):
                occurrences.append((tok.text, nid))
            for tok in code_identifiers(node.segment.own_code):
                occurrences.append((tok.text, nid))

        anc = {nid: [*tree.ancestors(nid), nid] for nid in tree.nodes}

        def distance(a: str, b: str) -> int:
            chain_a, chain_b = anc[a], anc[b]
            common = 0
            for x, y in zip(chain_a, chain_b):
                if x != y:
                    break
                common += 1
            return (len(chain_a) - common) + (len(chain_b) - common)

        stats: dict[str, tuple[int, int]] = {}  # text -> (min distance, count)
        low = prefix.lower()
        for text, nid in occurrences:
            if not text.lower().startswith(low):
                continue
            d = distance(block_id, nid)
            if text in stats:
                old_d, count = stats[text]
                stats[text] = (min(old_d, d), count + 1)
            else:
                stats[text] = (d, 1)
        ranked = sorted(stats.items(),
                        key=lambda kv: (kv[1][0], -kv[1][1], kv[0].lower(), kv[0]))
        return [text for text, _ in ranked]
