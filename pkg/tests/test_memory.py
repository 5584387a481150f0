import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pircheck.memory import Memory, UndeclaredVariable
from pircheck.symval import Err

paths = st.lists(st.integers(0, 2), max_size=3).map(lambda xs: (0,) + tuple(xs))


@given(st.lists(st.tuples(paths, st.sampled_from("abc")), max_size=12), paths, st.sampled_from("abc"))
@settings(deadline=None)
def test_lookup_is_longest_declared_prefix(decls, task, name):
    m = Memory()
    for t, n in decls:
        m.mem_decl(t, n)
    owners = [t for t, n in decls if n == name and task[:len(t)] == t]
    want = max(owners, key=len) if owners else None
    assert m.get_var(task, name) == want


def test_update_goes_to_visible_declaration():
    m = Memory()
    m.mem_decl((0,), "x")
    m.mem_decl((0, 1), "x")
    m.mem_update((0, 1, 0), "x", (0,), 5)
    m.mem_update((0, 2), "x", 0, 7)
    assert m.var_eval((0, 1), "x", (0,)) == 5
    assert m.var_eval((0,), "x", (0,)) == 7


def test_update_rejects_err_and_undeclared():
    m = Memory()
    m.mem_decl((0,), "x")
    with pytest.raises(ValueError):
        m.mem_update((0,), "x", (0,), Err("ArithError", "boom"))
    with pytest.raises(UndeclaredVariable):
        m.mem_update((0,), "y", (0,), 1)


def test_serialize_sorted_and_marks_dead_locals():
    m = Memory()
    m.mem_decl((0, 0), "t")
    m.mem_decl((0,), "b")
    m.mem_decl((0,), "a")
    m.mem_update((0,), "b", (1,), 2)
    m.mem_update((0,), "b", (0,), 1)
    m.mem_update((0,), "a", (0,), 3)
    m.mem_update((0, 0), "t", (0,), 4)
    m.finish_task((0, 0))
    assert m.serialize().splitlines() == [
        "0 a[0] = 3", "0 b[0] = 1", "0 b[1] = 2", "0.0 t[0] = 4  # local-dead"]


def test_captured_copies_hidden_by_default():
    m = Memory()
    m.mem_decl((0, 0), "i").captured = True
    m.mem_update((0, 0), "i", (0,), 1)
    assert list(m.items()) == []
    assert len(list(m.items(captured=True))) == 1
