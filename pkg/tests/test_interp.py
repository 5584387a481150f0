import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from pircheck.errors import Category
from pircheck.interp import BUDGET_ENV, Interpreter, default_budget
from pircheck.lang import load_file, load_program
from pircheck.symval import to_prefix

from conftest import conc_programs, corpus, mem_text, run_file, run_src, sequential_programs


def cell(res, name, *idx):
    return to_prefix(res.memory.root_array(name).cells[idx])


def test_handoff_runs_clean(handoff_text):
    res = run_src(handoff_text)
    assert res.ok
    assert cell(res, "A", 0) == "*(+(A[0],1),2)"
    assert cell(res, "A", 1) == "*(+(A[1],1),2)"
    assert res.stats.nb_conc == 4
    assert res.stats.t_int < 1.0


def test_handoff_without_waits_races():
    res = run_file(corpus("errors", "handoff_no_wait.pir"))
    err = res.error
    assert err.category is Category.RACE
    assert err.cell == "A[0]"
    assert sorted(err.lines) == [7, 11]


# (file, category, validity item, witness lines in any order)
ZOO = [
    ("race", Category.RACE, 1, [3, 5]),
    ("double_set", Category.DOUBLE_SET, 2, [3, 6, 8]),
    ("double_acquire", Category.DOUBLE_ACQUIRE_MATCH, 3, [3, 6, 8]),
    ("parallel_acquires", Category.PARALLEL_ACQUIRES, 4, [3, 6]),
    ("over_release", Category.OVER_RELEASE, 5, [3, 5, 6]),
]


@pytest.mark.parametrize("paranoid", [False, True])
@pytest.mark.parametrize("name, cat, item, lines", ZOO, ids=[z[0] for z in ZOO])
def test_validity_zoo(name, cat, item, lines, paranoid):
    res = run_file(corpus("errors", f"{name}.pir"), paranoid=paranoid)
    assert res.error.category is cat
    assert res.error.item == item
    assert sorted(res.error.lines) == lines
    if paranoid:
        assert res.paranoid_items == [item]


@pytest.mark.parametrize("name, cat, line", [
    ("divide_by_zero", Category.ARITH_ERROR, 2),
    ("sem_kind_conflict", Category.SEM_KIND_CONFLICT, 3),
    ("symbolic_branch", Category.SYMBOLIC_CONTROL_FLOW, 2),
    ("symbolic_index", Category.SYMBOLIC_INDEX, 2),
    ("undeclared_write", Category.UNDECLARED_WRITE, 9),
])
def test_other_errors(name, cat, line):
    res = run_file(corpus("errors", f"{name}.pir"), paranoid=True)
    assert res.error.category is cat
    assert res.error.lines == [line]
    assert res.paranoid_items == []


def test_deadlock_single_wait():
    err = run_file(corpus("errors", "deadlock_single.pir")).error
    assert err.category is Category.DEADLOCK
    assert [(w.task, w.line) for w in err.witnesses] == [((0,), 2)]
    assert "s[0]" in err.cell


def test_deadlock_circular_lists_both_tasks():
    err = run_file(corpus("errors", "deadlock_circular.pir")).error
    assert err.category is Category.DEADLOCK
    assert sorted((w.task, w.line) for w in err.witnesses) == [((0, 1), 3), ((0, 2), 7)]
    details = " ".join(w.detail for w in err.witnesses)
    assert "a[0]" in details and "b[0]" in details
    assert "a[0]" in err.message and "b[0]" in err.message


def test_budget_exceeded(monkeypatch):
    res = run_file(corpus("errors", "endless.pir"), budget=500)
    assert res.error.category is Category.BUDGET_EXCEEDED
    assert res.stats.nb_s == 500
    monkeypatch.setenv(BUDGET_ENV, "1234")
    assert default_budget() == 1234


ALL_RUNNABLE = sorted(set(conc_programs()) | set(sequential_programs())
                      | {p for p in corpus("errors").glob("*.pir") if p.stem != "endless"}
                      | {corpus("handoff.pir")})


@pytest.mark.parametrize("path", ALL_RUNNABLE, ids=lambda p: p.stem)
def test_macro_nodes_are_transparent(path):
    prog = load_file(path)
    on = Interpreter(prog, merge=True).run()
    off = Interpreter(prog, merge=False).run()
    assert mem_text(on) == mem_text(off)
    assert (on.error and (on.error.category, sorted(on.error.lines))) == \
        (off.error and (off.error.category, sorted(off.error.lines)))
    assert on.stats.nb_s == off.stats.nb_s
    assert on.stats.hb_nodes <= off.stats.hb_nodes


@pytest.mark.parametrize("path", sequential_programs(), ids=lambda p: p.stem)
def test_sequential_hb_ratio_is_zero(path):
    res = run_file(path)
    assert res.ok
    assert res.stats.hb_rat == 0
    assert res.stats.hb_nodes == 1
    assert res.stats.nb_conc == 0


def test_stats_counts():
    res = run_src("async { set(s[0], 1); } wait(s[0], 1); x[0] = 1; x[1] = 2;")
    st = res.stats
    # the implicit declaration of x is a statement; set and wait both count as sync
    assert st.nb_s == 6 and st.nb_conc == 1 and st.nb_sync == 2
    assert st.cdag_nodes == len(res.pool)
    d = st.to_dict(timing=False)
    assert "t_int" not in d and d["hb_nodes"] == st.hb_nodes


def test_task_local_declaration_shadows():
    res = run_src("int x[1]; x[0] = 1; async { int x[1]; x[0] = 5; y[0] = x[0]; }")
    assert res.ok
    assert res.memory.root_array("x").cells[(0,)] == 1
    assert res.memory.root_array("y").cells[(0,)] == 5


def test_loop_counter_captured_at_spawn():
    src = """
    i[0] = 0;
    while (i[0] < 3) {
      async { A[i[0]] = i[0] * 10; }
      i[0] = i[0] + 1;
    }
    """
    res = run_src(src)
    assert res.ok
    assert [res.memory.root_array("A").cells[(k,)] for k in range(3)] == [0, 10, 20]


def test_name_declared_only_in_a_task_is_not_implicit_at_root():
    res = run_src("x[0] = 1; async { int x[1]; x[0] = 5; }")
    assert res.error.category is Category.UNDECLARED_WRITE


def test_unsynchronized_shared_write_races():
    res = run_src("async { x[0] = 1; } async { x[0] = 2; }")
    assert res.error.category is Category.RACE


def test_semaphore_orders_accesses():
    res = run_src("async { x[0] = 1; set(s[0], 1); } wait(s[0], 1); y[0] = x[0];")
    assert res.ok
    assert res.memory.root_array("y").cells[(0,)] == 1


def test_counting_semaphore_gathers_releases():
    src = "async { release(s[0], 1); } async { release(s[0], 2); } acquire(s[0], 3); z[0] = 1;"
    assert run_src(src).ok


# random small concurrent programs: incremental checks must agree with the
# whole-graph check after every single step

def _task_body():
    stmt = st.one_of(
        st.builds(lambda c, d: f"A[{c}] = A[{d}] + 1;", st.integers(0, 2), st.integers(0, 2)),
        st.builds(lambda c: f"B[0] = A[{c}];", st.integers(0, 2)),
        st.builds(lambda s, v: f"set(s[{s}], {v});", st.integers(0, 1), st.integers(1, 2)),
        st.builds(lambda s, v: f"wait(s[{s}], {v});", st.integers(0, 1), st.integers(1, 2)),
        st.builds(lambda v: f"release(c[0], {v});", st.integers(0, 2)),
        st.builds(lambda v: f"acquire(c[0], {v});", st.integers(1, 2)),
    )
    return st.lists(stmt, min_size=1, max_size=4).map(" ".join)


@given(st.lists(_task_body(), min_size=1, max_size=3), _task_body())
@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_paranoid_agrees_on_random_programs(bodies, tail):
    src = " ".join(f"async {{ {b} }}" for b in bodies) + " " + tail
    prog = load_program(src)
    res = Interpreter(prog, paranoid=True, budget=10_000).run()  # ParanoidMismatch would raise
    plain = Interpreter(prog, budget=10_000).run()
    assert (res.error and res.error.category) == (plain.error and plain.error.category)
