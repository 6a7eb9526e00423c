"""The `ladder` command: serve, replay, record, export."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .cache import GenCache
from .errors import LadderError
from .gateway import LiveBackend, MockBackend, RecordingBackend
from .session import Session, run_script
from .tree import deserialize


def _counter_clock(start: float = 0.0):
    state = {"t": start}

    def tick():
        state["t"] += 1.0
        return state["t"]

    return tick


def _load_script(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def _run_session(script: dict, backend, out: Path,
                 cache: GenCache | None) -> Session:
    session = Session(
        script.get("session_id", "session"),
        backend,
        cache=cache,
        clock=_counter_clock(),
    )
    run_script(session, script)
    session.export(out)
    return session


@click.group()
def main():
    """Hierarchical prompt-tree code generation."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8787, show_default=True)
@click.option("--fixtures", type=click.Path(exists=True, file_okay=False),
              default=None, help="Serve against mock fixtures in this directory.")
@click.option("--live", is_flag=True,
              help="Serve against the live backend (LADDER_LLM_URL/KEY).")
@click.option("--data-dir", type=click.Path(file_okay=False), default=None,
              help="Persist session documents here.")
@click.option("--synonyms", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Synonym table file for semantic links.")
def serve(host, port, fixtures, live, data_dir, synonyms):
    """Start the HTTP + event-stream service."""
    import uvicorn

    from .links import load_synonyms
    from .service import create_app

    if live:
        backend_factory = LiveBackend
    elif fixtures:
        backend_factory = lambda: MockBackend.from_dir(fixtures)
    else:
        backend_factory = MockBackend
    app = create_app(backend_factory=backend_factory,
                     cache_factory=GenCache,
                     data_dir=data_dir,
                     synonyms=load_synonyms(synonyms) if synonyms else None)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.argument("script", type=click.Path(exists=True, dir_okay=False))
@click.argument("fixtures", type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--cache-file", type=click.Path(dir_okay=False), default=None,
              help="Persist the generation cache across replays.")
def replay(script, fixtures, out, cache_file):
    """Replay a recorded op script against mock fixtures; write the outputs."""
    out = Path(out)
    cache = GenCache()
    if cache_file and Path(cache_file).exists():
        cache.load(cache_file)
    backend = MockBackend.from_dir(fixtures)
    try:
        session = _run_session(_load_script(Path(script)), backend, out, cache)
    except LadderError as exc:
        payload = {"code": exc.code, "message": str(exc)}
        if getattr(exc, "key", None):
            payload["key"] = exc.key
        click.echo(f"replay failed: {json.dumps(payload)}", err=True)
        sys.exit(1)
    if cache_file:
        cache.save(cache_file)
    stats = {
        "backend_calls": backend.call_count,
        "nodes": len(session.tree) - 1,
        "tree_version": session.tree_version,
        "doc_version": session.doc_version,
    }
    (out / "stats.json").write_text(
        json.dumps(stats, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    click.echo(json.dumps(stats))


@main.command()
@click.argument("script", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--fixtures-out", type=click.Path(dir_okay=False), required=True,
              help="Write recorded fixtures to this JSON file.")
def record(script, out, fixtures_out):
    """Run a script against the live backend, recording replayable fixtures."""
    recorder = RecordingBackend(LiveBackend())
    try:
        _run_session(_load_script(Path(script)), recorder, Path(out), None)
    except LadderError as exc:
        click.echo(f"record failed: {exc.code}: {exc}", err=True)
        sys.exit(1)
    recorder.save(fixtures_out)
    click.echo(json.dumps({"recorded": len(recorder.records)}))


@main.command()
@click.argument("session_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), required=True)
def export(session_file, out):
    """Write program + sidecar map from a stored session document."""
    try:
        tree = deserialize(Path(session_file).read_bytes())
    except LadderError as exc:
        click.echo(f"export failed: {exc.code}: {exc}", err=True)
        sys.exit(1)
    session = Session(tree.session_id, MockBackend(), tree=tree)
    paths = session.export(out)
    click.echo(json.dumps({k: str(v) for k, v in paths.items()}))


if __name__ == "__main__":
    main()
