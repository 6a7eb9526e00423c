"""Assembly, fold views, and code-edit routing."""

import random

import pytest

from ladder.errors import AmbiguousEdit, CompositionError, NotFound
from ladder.segments import (
    DEFAULT_ASSEMBLY,
    apply_code_edit,
    assemble,
    composed_code,
    visible_slice,
)
from ladder.tree import ROOT_ID, PromptTree

MARKER = DEFAULT_ASSEMBLY.marker


@pytest.fixture
def tree():
    return PromptTree("seg")


def add(tree, anchor, relation, prompt="p", code=""):
    return tree.add_block(anchor, relation, prompt, own_code=code)


def test_single_block_document(tree):
    b = add(tree, ROOT_ID, "child", code="x = 1")
    doc = assemble(tree)
    assert doc.text == "x = 1\n"
    assert doc.index[b] == (1, 1)
    assert doc.index[ROOT_ID] == (1, 1)


def test_suite_parent_indents_children(tree):
    loop = add(tree, ROOT_ID, "child", code="for epoch in range(1, 31):")
    add(tree, loop, "child", code="loss = step()")
    doc = assemble(tree)
    assert doc.text == "for epoch in range(1, 31):\n    loss = step()\n"


def test_marker_splices_children(tree):
    parent = add(tree, ROOT_ID, "child",
                 code=f"{MARKER}\nmodel = LinearRegression()")
    add(tree, parent, "child", code="X_train, X_test = split(X)")
    doc = assemble(tree)
    assert doc.text == "X_train, X_test = split(X)\nmodel = LinearRegression()\n"


def test_marker_inside_suite_indents(tree):
    loop = add(tree, ROOT_ID, "child",
               code=f"for i in range(3):\n{MARKER}\nprint(i)")
    add(tree, loop, "child", code="work(i)")
    doc = assemble(tree)
    assert doc.text == "for i in range(3):\n    work(i)\nprint(i)\n"


def test_double_marker_rejected(tree):
    add(tree, ROOT_ID, "child", code=f"{MARKER}\n{MARKER}")
    with pytest.raises(CompositionError):
        assemble(tree)


def test_children_append_without_marker(tree):
    parent = add(tree, ROOT_ID, "child", code="a = 1")
    add(tree, parent, "child", code="b = 2")
    doc = assemble(tree)
    assert doc.text == "a = 1\nb = 2\n"


def test_global_child_hoists_above_parent(tree):
    loop = add(tree, ROOT_ID, "child", code="for i in range(3):")
    helper = add(tree, loop, "child", code="def helper():\n    return 1")
    add(tree, loop, "child", code="helper()")
    tree.block(helper).scope = "global"
    doc = assemble(tree)
    assert doc.text == (
        "def helper():\n    return 1\nfor i in range(3):\n    helper()\n"
    )
    first, last = doc.index[loop]
    hf, hl = doc.index[helper]
    assert first <= hf <= hl <= last


def test_empty_blocks_have_empty_ranges(tree):
    a = add(tree, ROOT_ID, "child", code="x = 1")
    empty = add(tree, ROOT_ID, "child")
    doc = assemble(tree)
    first, last = doc.index[empty]
    assert last == first - 1


def check_document_invariants(tree, doc):
    for nid in tree.nodes:
        first, last = doc.index[nid]
        for child in tree.nodes[nid].children:
            cf, cl = doc.index[child]
            assert first <= cf and cl <= last, f"{child} escapes {nid}"
        kids = tree.nodes[nid].children
        ranges = [doc.index[c] for c in kids if tree.nodes[c].scope != "global"]
        for (af, al), (bf, bl) in zip(ranges, ranges[1:]):
            assert al < bf or al < af  # ordered and disjoint (empties allowed)
    top_lines = []
    for child in tree.root.children:
        cf, cl = doc.index[child]
        top_lines.extend(doc.lines[cf - 1:cl])
    assert "\n".join(top_lines) + ("\n" if top_lines else "") == doc.text


def random_tree(rng, max_nodes=30):
    tree = PromptTree("rand")
    ids = [ROOT_ID]
    snippets = [
        "x = 1", "y = compute()", "for i in range(3):", "if ready:",
        f"{MARKER}\ntail()", f"head()\n{MARKER}", "print(i)", "",
        "def f():", "a, b = split(v)",
    ]
    for n in range(rng.randrange(1, max_nodes)):
        anchor = rng.choice(ids)
        relation = "child" if anchor == ROOT_ID else rng.choice(["child", "sibling"])
        ids.append(tree.add_block(anchor, relation, f"p{n}",
                                  own_code=rng.choice(snippets)))
    return tree


def test_random_trees_satisfy_invariants():
    rng = random.Random(13)
    for _ in range(50):
        tree = random_tree(rng)
        doc = assemble(tree)
        check_document_invariants(tree, doc)
        assert assemble(tree).text == doc.text


def test_composed_code_subtree(tree):
    loop = add(tree, ROOT_ID, "child", code="for i in r:")
    add(tree, loop, "child", code="work(i)")
    assert composed_code(tree, loop) == "for i in r:\n    work(i)"


# -- visible_slice -------------------------------------------------------


def scenario_doc(tree):
    a = add(tree, ROOT_ID, "child", "task a", code="a1 = 1\na2 = 2")
    b = add(tree, ROOT_ID, "child", "task b", code="b = load():"[:-1])
    b1 = add(tree, b, "child", "sub b1", code="b1 = 1")
    c = add(tree, ROOT_ID, "child", "task c", code="c = 3")
    return a, b, b1, c, assemble(tree)


def test_select_only_block_folds_nothing(tree):
    b = add(tree, ROOT_ID, "child", code="x = 1")
    view = visible_slice(assemble(tree), b)
    assert view.folded == ()
    assert view.text == "x = 1\n"


def test_select_mid_block_folds_other_top_ranges(tree):
    a, b, b1, c, doc = scenario_doc(tree)
    view = visible_slice(doc, b1)
    assert {f.block for f in view.folded} == {a, c}
    assert "b1 = 1" in view.text
    assert "a1 = 1" not in view.text
    assert view.path == (b, b1)


def test_select_parent_keeps_children_visible(tree):
    a, b, b1, c, doc = scenario_doc(tree)
    view = visible_slice(doc, b)
    assert {f.block for f in view.folded} == {a, c}
    assert "b1 = 1" in view.text


def test_fold_oracle_set_algebra(tree):
    a, b, b1, c, doc = scenario_doc(tree)
    view = visible_slice(doc, c)
    visible = set()
    for lineno in range(1, len(doc.lines) + 1):
        if not any(f.first_line <= lineno <= f.last_line for f in view.folded):
            visible.add(lineno)
    related = set()
    for nid in (c, ROOT_ID):
        first, last = doc.index[nid]
        related.update(range(first, last + 1))
    assert visible <= related


def test_slice_unknown_block(tree):
    add(tree, ROOT_ID, "child", code="x = 1")
    with pytest.raises(NotFound):
        visible_slice(assemble(tree), "ghost")


# -- apply_code_edit -----------------------------------------------------


def test_edit_leaf_line_records_revision(tree):
    b = add(tree, ROOT_ID, "child", code="x = 1")
    doc = assemble(tree)
    routing = apply_code_edit(tree, doc, 1, 1, "x = 42")
    assert routing.block == b
    assert routing.doc.text == "x = 42\n"
    rev = tree.block(b).revisions[-1]
    assert rev.op_kind == "code_edit"
    assert rev.code_before == "x = 1" and rev.code_after == "x = 42"


def test_edit_nested_child_routes_to_child(tree):
    loop = add(tree, ROOT_ID, "child", code="for i in range(3):")
    inner = add(tree, loop, "child", code="work(i)")
    doc = assemble(tree)
    routing = apply_code_edit(tree, doc, 2, 2, "    rest(i)")
    assert routing.block == inner
    assert routing.doc.text == "for i in range(3):\n    rest(i)\n"
    assert tree.block(loop).revisions[-1].op_kind == "add"


def test_edit_across_sibling_boundary_rejected(tree):
    add(tree, ROOT_ID, "child", code="a = 1")
    add(tree, ROOT_ID, "child", code="b = 2")
    doc = assemble(tree)
    with pytest.raises(AmbiguousEdit):
        apply_code_edit(tree, doc, 1, 2, "c = 3")


def test_edit_then_reassemble_reproduces_text(tree):
    loop = add(tree, ROOT_ID, "child", code="for i in range(3):")
    add(tree, loop, "child", code="work(i)\nmore(i)")
    doc = assemble(tree)
    routing = apply_code_edit(tree, doc, 2, 3, "    first(i)\n    second(i)")
    assert routing.doc.text == "for i in range(3):\n    first(i)\n    second(i)\n"


def test_edit_changes_only_target_range(tree):
    a = add(tree, ROOT_ID, "child", code="a = 1")
    b = add(tree, ROOT_ID, "child", code="b = 2\nbb = 22")
    c = add(tree, ROOT_ID, "child", code="c = 3")
    doc = assemble(tree)
    routing = apply_code_edit(tree, doc, 2, 2, "b = 20\nextra = 0")
    assert routing.doc.lines[0] == "a = 1"
    assert routing.doc.lines[-1] == "c = 3"
    assert routing.doc.index[c] == (5, 5)
