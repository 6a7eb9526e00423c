"""Interim execution of a block's subtree wrapped in its ancestor context.

The runnable slice for a block is its full composed subtree plus everything
that precedes it in pre-order at ancestor levels (imports, data loading, the
enclosing loop headers). Running the root therefore equals running the whole
assembled document. Each run gets a fresh temp workspace, removed after a
completed run; artifacts are captured before cleanup.
"""

from __future__ import annotations

import os
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import RunnerUnavailable, RunTimeout
from .segments import DEFAULT_ASSEMBLY, AssemblyConfig, assemble
from .tree import ROOT_ID, PromptTree

OUTPUT_CAP = 1024 * 1024  # per stream
ARTIFACT_CAP = 1024 * 1024  # per captured file


@dataclass(frozen=True)
class RunnerConfig:
    command: tuple[str, ...] = ("python3", "{file}")
    filename: str = "program.py"
    timeout_s: float = 30.0
    env_allowlist: tuple[str, ...] = ("PATH", "HOME", "LANG", "LC_ALL",
                                      "PYTHONIOENCODING", "TMPDIR")


@dataclass
class RunResult:
    exit_status: int
    stdout: str
    stderr: str
    artifacts: list[str]
    wall_ms: float
    stdout_truncated: bool = False
    stderr_truncated: bool = False
    artifact_data: dict[str, bytes] = field(default_factory=dict)


def _slice_tree(tree: PromptTree, block_id: str) -> PromptTree:
    """Prune to ancestors, pre-order predecessors at ancestor levels, and the
    block's own subtree."""
    path = [*tree.ancestors(block_id), block_id]
    keep_path = set(path)
    pruned = PromptTree(tree.session_id, clock=tree.clock)
    pruned.nodes.clear()

    def clone(nid: str, parent: str | None, full: bool) -> None:
        src = tree.nodes[nid]
        from .tree import PromptBlock, SegmentRef
        block = PromptBlock(
            nid, parent, prompt=src.prompt,
            segment=SegmentRef(own_code=src.segment.own_code),
            scope=src.scope,
        )
        pruned.nodes[nid] = block
        for child in src.children:
            if full:
                block.children.append(child)
                clone(child, nid, True)
            elif child in keep_path:
                block.children.append(child)
                clone(child, nid, child == block_id)
                break  # nothing after the path child at this level
            else:
                block.children.append(child)
                clone(child, nid, True)  # preceding sibling: full subtree

    clone(ROOT_ID, None, block_id == ROOT_ID)
    return pruned


def runnable_slice(tree: PromptTree, block_id: str,
                   cfg: AssemblyConfig = DEFAULT_ASSEMBLY) -> str:
    tree.block(block_id)
    return assemble(_slice_tree(tree, block_id), cfg).text


def _capped(data: bytes) -> tuple[str, bool]:
    truncated = len(data) > OUTPUT_CAP
    return data[:OUTPUT_CAP].decode("utf-8", errors="replace"), truncated


def run_block(
    tree: PromptTree,
    block_id: str,
    runner: RunnerConfig = RunnerConfig(),
    cfg: AssemblyConfig = DEFAULT_ASSEMBLY,
) -> RunResult:
    """Execute a block's runnable slice in an isolated temp workspace."""
    program = runnable_slice(tree, block_id, cfg)
    workspace = Path(tempfile.mkdtemp(prefix="ladder-run-"))
    program_path = workspace / runner.filename
    program_path.write_text(program, encoding="utf-8")
    command = [part.replace("{file}", str(program_path)) for part in runner.command]
    env = {k: v for k, v in os.environ.items() if k in runner.env_allowlist}

    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            command, cwd=workspace, env=env,
            stdout=subprocess.PIPE, stderr=subprocess.PIPE,
        )
    except FileNotFoundError as exc:
        shutil.rmtree(workspace, ignore_errors=True)
        raise RunnerUnavailable(f"runner command not found: {exc}") from None

    def collect(exit_status: int, out: bytes, err: bytes) -> RunResult:
        stdout, out_trunc = _capped(out)
        stderr, err_trunc = _capped(err)
        artifacts = sorted(
            str(p.relative_to(workspace))
            for p in workspace.rglob("*")
            if p.is_file() and p != program_path)
        data = {}
        for name in artifacts:
            blob = (workspace / name).read_bytes()
            if len(blob) <= ARTIFACT_CAP:
                data[name] = blob
        return RunResult(
            exit_status, stdout, stderr, artifacts,
            (time.monotonic() - start) * 1000.0,
            out_trunc, err_trunc, data,
        )

    try:
        out, err = proc.communicate(timeout=runner.timeout_s)
    except subprocess.TimeoutExpired:
        proc.kill()
        out, err = proc.communicate()
        partial = collect(-1, out or b"", err or b"")
        shutil.rmtree(workspace, ignore_errors=True)
        raise RunTimeout(
            f"run exceeded {runner.timeout_s}s", partial=partial) from None

    result = collect(proc.returncode, out, err)
    shutil.rmtree(workspace, ignore_errors=True)
    return result
