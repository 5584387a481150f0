import itertools
import random

import pytest

from pircheck.hbgraph import HBGraph, NodeKind, graph_valid_full
from pircheck.interp import Interpreter
from pircheck.lang import load_file

from conftest import conc_programs

ERRONEOUS = {"racy_write", "deadlock_cycle", "double_set_race", "over_release_race"}
CLEAN = [p for p in conc_programs() if p.stem not in ERRONEOUS]


def _random_graph(seed, steps=60):
    rng = random.Random(seed)
    g = HBGraph()
    live = [0]
    for _ in range(steps):
        r = rng.random()
        t = rng.choice(live)
        if r < 0.15 and len(live) < 8:
            spawn = g.stmt_node(t, NodeKind.ASYNC, 0)
            path = g.tasks[t] + (len(g.tasks),)
            live.append(g.add_task(path, spawn))
        elif r < 0.35 and len(g.nodes) > 1:
            src = rng.choice(g.nodes)
            dst = g.stmt_node(t, NodeKind.WAIT, 0)
            if src is not dst and src.tix != t:
                g.add_sync_edge(src, dst)
        else:
            g.stmt_node(t, NodeKind.PLAIN, 0, merge=rng.random() < 0.5)
    return g


@pytest.mark.parametrize("seed", range(25))
def test_vector_clocks_match_dfs_on_random_graphs(seed):
    g = _random_graph(seed)
    for a, b in itertools.permutations(g.nodes, 2):
        assert g.happens_before(a, b) == g.reachable_dfs(a, b), (a, b)


@pytest.mark.parametrize("path", CLEAN, ids=lambda p: p.stem)
def test_vector_clocks_match_dfs_on_corpus(path):
    res = Interpreter(load_file(path), keep_accesses=True).run()
    assert res.ok
    g = res.graph
    for a, b in itertools.permutations(g.nodes, 2):
        assert g.happens_before(a, b) == g.reachable_dfs(a, b)


@pytest.mark.parametrize("path", CLEAN, ids=lambda p: p.stem)
def test_full_validity_agrees_with_oracle_reachability(path):
    res = Interpreter(load_file(path), keep_accesses=True).run()
    assert graph_valid_full(res.graph) == []
    assert graph_valid_full(res.graph, oracle=True) == []


def test_merge_folds_plain_statements():
    g = HBGraph()
    a = g.stmt_node(0, NodeKind.PLAIN, 1)
    b = g.stmt_node(0, NodeKind.PLAIN, 2)
    assert a is b and a.merged_count == 2
    c = g.stmt_node(0, NodeKind.SET, 3)
    d = g.stmt_node(0, NodeKind.PLAIN, 4)
    assert c is not d and g.happens_before(a, d)


def test_merge_off_makes_a_node_per_statement():
    g = HBGraph()
    nodes = {g.stmt_node(0, NodeKind.PLAIN, i, merge=False).id for i in range(5)}
    assert len(nodes) == 5


def test_sibling_tasks_are_parallel():
    g = HBGraph()
    s1 = g.stmt_node(0, NodeKind.ASYNC, 1)
    t1 = g.add_task((0, 0), s1)
    s2 = g.stmt_node(0, NodeKind.ASYNC, 2)
    t2 = g.add_task((0, 1), s2)
    x = g.stmt_node(t1, NodeKind.PLAIN, 3)
    y = g.stmt_node(t2, NodeKind.PLAIN, 4)
    assert g.may_happen_in_parallel(x, y)
    w = g.stmt_node(t2, NodeKind.WAIT, 5)
    g.add_sync_edge(x, w)
    assert g.happens_before(x, w) and not g.happens_before(w, x)


def test_dot_output_parses():
    pydot = pytest.importorskip("pydot")
    res = Interpreter(load_file(CLEAN[0])).run()
    assert pydot.graph_from_dot_data(res.graph.to_dot())
