"""Acceptance criteria, one test per criterion.

Each test prints one `[ACCEPTANCE] <name>: PASS|FAIL` line; run with
`pytest tests/test_acceptance.py -v -s` to see them live.
"""

import json
import random
import subprocess
import sys
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from ladder.cache import GenCache, LexicalEmbedder
from ladder.cli import main as cli_main
from ladder.executor import RunnerConfig, run_block
from ladder.gateway import MockBackend
from ladder.links import CodeTarget, links_for, score_tokens
from ladder.mixed_mode import CODE, NL, classify_spans
from ladder.segments import DEFAULT_ASSEMBLY, assemble
from ladder.service import create_app
from ladder.tree import ROOT_ID, PromptTree, deserialize

REPO = Path(__file__).resolve().parent.parent
SCRIPT = REPO / "fixtures/fig2/script.json"
FIXTURES = REPO / "fixtures/fig2/responses"
GOLDEN = REPO / "fixtures/fig2/golden"
CORPUS = REPO / "fixtures/mixed_corpus.json"
MARKER = DEFAULT_ASSEMBLY.marker


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"[ACCEPTANCE] {name}: PASS")


# -- 1. tree-algebra property suite ----------------------------------------


def random_op(rng, tree, ids):
    alive = [i for i in ids if i in tree]
    op = rng.choice(("add", "add", "edit", "delete", "duplicate",
                     "move", "supplement", "fold"))
    if op == "add" or len(alive) <= 1:
        anchor = rng.choice(alive)
        relation = "child" if anchor == ROOT_ID else \
            rng.choice(("child", "sibling"))
        ids.append(tree.add_block(anchor, relation, f"task {rng.random():.3f}"))
        return
    target = rng.choice([i for i in alive if i != ROOT_ID])
    if op == "edit":
        tree.edit_prompt(target, f"edited {rng.random():.3f}")
    elif op == "delete":
        tree.delete_block(target)
    elif op == "duplicate":
        ids.append(tree.duplicate_block(target))
    elif op == "move":
        candidates = [i for i in alive if i in tree and i != target
                      and not tree.is_descendant(i, target)]
        if candidates:
            parent = rng.choice(candidates)
            position = rng.randrange(len(tree.block(parent).children) + 1)
            tree.move_block(target, parent, position)
    elif op == "supplement":
        tree.add_supplement(target, f"detail {rng.random():.3f}")
    elif op == "fold":
        tree.set_folded(target, rng.random() < 0.5)


def test_tree_algebra_property_suite():
    with criterion("tree-algebra 1000 randomized op sequences"):
        rng = random.Random(2024)
        start = time.monotonic()
        for seq in range(1000):
            tree = PromptTree(f"seq{seq}")
            ids = [ROOT_ID]
            before = len(tree)
            for _ in range(rng.randrange(4, 12)):
                n_before = len(tree)
                random_op(rng, tree, ids)
                tree.check_invariants()  # also checks revision replay
                assert len(tree) >= 1
            assert len(tree) >= 1 and before == 1
        elapsed = time.monotonic() - start
        assert elapsed < 30.0, f"took {elapsed:.1f}s"


# -- 2. assembly suite -------------------------------------------------------


SNIPPETS = (
    "x = 1", "y = compute()", "for i in range(3):", "if ready:",
    f"{MARKER}\ntail()", f"head()\n{MARKER}", "print(i)", "",
    "def helper():", "a, b = split(v)", "while running:",
)


def build_random_tree(rng, max_nodes):
    tree = PromptTree("assembly")
    ids = [ROOT_ID]
    for n in range(rng.randrange(1, max_nodes + 1)):
        anchor = rng.choice(ids)
        relation = "child" if anchor == ROOT_ID else \
            rng.choice(("child", "sibling"))
        ids.append(tree.add_block(anchor, relation, f"p{n}",
                                  own_code=rng.choice(SNIPPETS)))
    return tree


def assert_document_invariants(tree, doc):
    for nid in tree.nodes:
        first, last = doc.index[nid]
        for child in tree.nodes[nid].children:
            cf, cl = doc.index[child]
            assert first <= cf and cl <= last, f"{child} escapes {nid}"
        ranges = [doc.index[c] for c in tree.nodes[nid].children]
        for (af, al), (bf, bl) in zip(ranges, ranges[1:]):
            assert al < bf, "sibling ranges overlap or are out of order"
    top = []
    for child in tree.root.children:
        cf, cl = doc.index[child]
        top.extend(doc.lines[cf - 1:cl])
    assert "\n".join(top) + ("\n" if top else "") == doc.text


def test_assembly_suite():
    with criterion("assembly invariants on 500 random trees"):
        rng = random.Random(99)
        start = time.monotonic()
        for _ in range(500):
            tree = build_random_tree(rng, 50)
            doc = assemble(tree)
            assert_document_invariants(tree, doc)
            assert assemble(tree).text == doc.text, "re-assembly not identical"
        elapsed = time.monotonic() - start
        assert elapsed < 10.0, f"took {elapsed:.1f}s"


# -- 3. scenario replay --------------------------------------------------------


def test_scenario_replay_matches_golden():
    with criterion("scenario replay reproduces golden tree and program"):
        start = time.monotonic()
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / "out"
            result = CliRunner().invoke(cli_main, [
                "replay", str(SCRIPT), str(FIXTURES), "--out", str(out)])
            assert result.exit_code == 0, result.output
            program = (out / "program.py").read_bytes()
            assert program == (GOLDEN / "program.py").read_bytes()
            session_bytes = (out / "session.json").read_bytes()
            assert session_bytes == (GOLDEN / "session.json").read_bytes()

            tree = deserialize(session_bytes)
            by_prompt = {b.prompt: b for b in tree.nodes.values()}
            partition = by_prompt["Partition the Dataset"]
            model = by_prompt["Train Regression Model"]
            assert partition.parent == model.id
            loop = by_prompt["for epoch in range(1, 31):"]
            assert loop.segment.own_code.startswith("for epoch in range(1, 31):")
            assert "Ridge(alpha=0.5)" in model.segment.own_code
            assert "LinearRegression()" not in model.segment.own_code
            plot = by_prompt["Plot Loss Curve"]
            assert plot.parent == loop.id
            assert by_prompt["Predict on Train and Test data"].parent == \
                by_prompt["Train one epoch and track the loss"].id
        elapsed = time.monotonic() - start
        assert elapsed < 5.0, f"took {elapsed:.1f}s"


# -- 4. propagation contract ----------------------------------------------------


def test_propagation_contract_over_http():
    with criterion("propagation visits parent + descendants, no-op chain "
                   "keeps document bytes"):
        document = json.loads((GOLDEN / "session.json").read_text())
        app = create_app(backend_factory=lambda: MockBackend(
            default_responses={"propagate_changes": "unchanged",
                               "supplement_merge": "unchanged"}))
        with TestClient(app) as client:
            client.post("/sessions", json={"session_id": "fig2",
                                           "document": document})
            doc_before = client.get("/sessions/fig2/document").json()["text"]
            tree = deserialize((GOLDEN / "session.json").read_bytes())
            model = next(b.id for b in tree.nodes.values()
                         if b.prompt == "Train Regression Model")
            expected_scope = [model, *tree.descendants(model)]

            receipt = client.patch(
                f"/sessions/fig2/blocks/{model}",
                json={"prompt": "Train Logistic Regression Model"},
            ).json()["receipt"]
            jid = client.post("/sessions/fig2/propagate",
                              json={"receipt": receipt}).json()["job_id"]
            deadline = time.monotonic() + 10
            while time.monotonic() < deadline:
                job = client.get(f"/sessions/fig2/jobs/{jid}").json()
                if job["status"] != "running":
                    break
                time.sleep(0.01)
            assert job["status"] == "done", job
            steps = [e for e in job["events"] if e["type"] == "job.step"]
            assert len(steps) == len(job["result"]["plan"])
            assert [s["step"]["block"] for s in steps] == expected_scope
            assert all(s["step"]["outcome"] == "unchanged" for s in steps)
            doc_after = client.get("/sessions/fig2/document").json()["text"]
            assert doc_after == doc_before


# -- 5. cache transparency --------------------------------------------------------


def test_cache_transparency_and_semantic_oracle():
    with criterion("cache transparency across replays; semantic NN matches "
                   "brute force"):
        runner = CliRunner()
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            cache_file = tmp / "cache.json"
            for leg in ("a", "b"):
                result = runner.invoke(cli_main, [
                    "replay", str(SCRIPT), str(FIXTURES),
                    "--out", str(tmp / leg), "--cache-file", str(cache_file)])
                assert result.exit_code == 0, result.output
            stats = json.loads((tmp / "b" / "stats.json").read_text())
            assert stats["backend_calls"] == 0, stats
            assert (tmp / "a" / "program.py").read_bytes() == \
                (tmp / "b" / "program.py").read_bytes()
            assert (tmp / "a" / "session.json").read_bytes() == \
                (tmp / "b" / "session.json").read_bytes()

        rng = random.Random(41)
        embed = LexicalEmbedder()
        words = ["train", "model", "plot", "loss", "data", "split", "epoch",
                 "save", "load", "clean", "merge", "frame", "score", "fold"]
        for _ in range(100):
            cache = GenCache(threshold=0.9)
            texts = []
            for i in range(rng.randrange(1, 25)):
                text = " ".join(rng.choices(words, k=rng.randrange(1, 6)))
                texts.append(text)
                from ladder.gateway import (GenerationExchange,
                                            GenerationParams, PromptRequest)
                exchange = GenerationExchange(
                    PromptRequest("t", (("i", str(i)),), ()),
                    GenerationParams(), text, "mock", 0.0)
                cache.insert(cache.make_entry(f"k{i}", text, exchange, "b"))
            query = " ".join(rng.choices(words, k=rng.randrange(1, 5)))
            q = embed(query)
            sims = [float(np.dot(embed(t), q)) for t in texts]
            best = max(sims)
            hit = cache.lookup("absent-key", query)
            if best >= 0.9:
                assert hit is not None and not hit.exact
                assert hit.similarity == pytest.approx(best)
            else:
                assert hit is None


# -- 6. mixed-mode corpus -----------------------------------------------------------


def test_mixed_mode_corpus_agreement():
    with criterion("mixed-mode corpus agreement >= 95%"):
        corpus = json.loads(CORPUS.read_text())["prompts"]
        assert len(corpus) >= 50
        total = agree = 0
        for entry in corpus:
            prompt = "".join(text for _, text in entry["segments"])
            labels = [kind for kind, text in entry["segments"] for _ in text]
            spans = classify_spans(prompt, frozenset(entry.get("known", [])))
            predicted = [None] * len(prompt)
            for span in spans:
                for i in range(span.start, span.end):
                    predicted[i] = span.kind
            agree += sum(a == b for a, b in zip(labels, predicted))
            total += len(prompt)
        assert total and agree / total >= 0.95, f"agreement {agree / total:.3f}"

        loop = "for epoch in range(1, 31):"
        spans = classify_spans(loop)
        assert [(s.kind, loop[s.start:s.end]) for s in spans] == [(CODE, loop)]
        task = "Partition the Dataset"
        spans = classify_spans(task)
        assert [(s.kind, task[s.start:s.end]) for s in spans] == [(NL, task)]


# -- 7. semantic links ---------------------------------------------------------------


def test_semantic_link_checks():
    with criterion("predict<->.predict scores 1.0 and ranks first; synonyms 0.6"):
        tree = deserialize((GOLDEN / "session.json").read_bytes())
        doc = assemble(tree)
        predict_block = next(b for b in tree.nodes.values()
                             if b.prompt == "Predict on Train and Test data")
        start = predict_block.prompt.index("Predict")
        end = start + len("Predict")
        first = links_for(tree, doc, predict_block.id, start, end)
        assert first, "no links found"
        top = first[0]
        assert isinstance(top.target, CodeTarget)
        assert top.target.token == ".predict"
        assert top.score == 1.0
        assert all(link.score <= top.score for link in first)

        for a in ("df", "data", "table"):
            for b in ("df", "data", "table"):
                if a != b:
                    assert score_tokens([a], [b]) == 0.6

        for _ in range(5):
            again = links_for(tree, doc, predict_block.id, start, end)
            assert again[0] == top and again == first


# -- 8. interim execution --------------------------------------------------------------


def fixture_programs():
    progs = []

    t1 = PromptTree("p1")
    t1.add_block(ROOT_ID, "child", "print", own_code='print("solo")')
    progs.append(t1)

    t2 = PromptTree("p2")
    a = t2.add_block(ROOT_ID, "child", "setup", own_code="xs = [1, 2, 3]")
    loop = t2.add_block(a, "sibling", "loop", own_code="for x in xs:")
    t2.add_block(loop, "child", "body", own_code="print(x * 2)")
    progs.append(t2)

    t3 = PromptTree("p3")
    outer = t3.add_block(ROOT_ID, "child", "outer", own_code="for i in range(2):")
    inner = t3.add_block(outer, "child", "inner", own_code="for j in range(2):")
    t3.add_block(inner, "child", "print", own_code="print(i, j)")
    progs.append(t3)

    t4 = PromptTree("p4")
    head = t4.add_block(ROOT_ID, "child", "fn",
                        own_code=f"def shout(msg):\n{MARKER}\nshout('hey')")
    t4.add_block(head, "child", "body", own_code="print(msg.upper())")
    progs.append(t4)

    t5 = PromptTree("p5")
    t5.add_block(ROOT_ID, "child", "a", own_code='print("first")')
    b = t5.add_block(ROOT_ID, "child", "b", own_code="if True:")
    t5.add_block(b, "child", "c", own_code='print("second")')
    t5.add_block(ROOT_ID, "child", "d", own_code='print("third")')
    progs.append(t5)

    return progs


def test_interim_execution_and_timeout():
    with criterion("root run equals full-document run on 5 programs; "
                   "timeout within 1s of limit"):
        runner = RunnerConfig(command=(sys.executable, "{file}"), timeout_s=20)
        for tree in fixture_programs():
            via_block = run_block(tree, ROOT_ID, runner)
            with tempfile.NamedTemporaryFile(
                    "w", suffix=".py", delete=False) as fh:
                fh.write(assemble(tree).text)
                path = fh.name
            direct = subprocess.run([sys.executable, path],
                                    capture_output=True, text=True, timeout=30)
            assert via_block.exit_status == direct.returncode == 0
            assert via_block.stdout == direct.stdout, tree.session_id

        tree = PromptTree("hang")
        tree.add_block(ROOT_ID, "child", "spin",
                       own_code="import time\ntime.sleep(60)")
        limited = RunnerConfig(command=(sys.executable, "{file}"), timeout_s=2.0)
        begin = time.monotonic()
        from ladder.errors import RunTimeout
        with pytest.raises(RunTimeout):
            run_block(tree, "b1", limited)
        elapsed = time.monotonic() - begin
        assert abs(elapsed - 2.0) <= 1.0, f"timeout fired after {elapsed:.2f}s"
