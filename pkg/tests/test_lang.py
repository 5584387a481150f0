import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pircheck.lang import ElabError, LexError, ParseError, load_program, parse, pretty
from pircheck.lang import ast as A
from pircheck.lang.parser import Parser
from pircheck.lang.pretty import fmt_expr

from conftest import CORPUS

ALL_FILES = sorted(CORPUS.rglob("*.pir"))

BINOPS = ["+", "-", "*", "/", "%", "<<", ">>", "&", "|", "^",
          "<", "<=", ">", ">=", "==", "!=", "&&", "||"]


def _exprs():
    leaves = st.one_of(
        st.integers(0, 2 ** 31 - 1).map(A.Const),
        st.sampled_from([0.5, 1.0, 2.25, 1e-3]).map(A.Const),
        st.sampled_from(["a", "b", "xs"]).map(lambda n: A.Load(n, (A.Const(0),))),
    )

    def extend(sub):
        return st.one_of(
            st.builds(A.Binary, st.sampled_from(BINOPS), sub, sub),
            st.builds(A.Unary, st.sampled_from(["-", "!", "~"]), sub),
            st.builds(A.Ternary, sub, sub, sub),
            st.builds(lambda i, n: A.Load(n, (i,)), sub, st.sampled_from(["a", "b"])),
            st.builds(lambda x, y: A.Call("min", (x, y)), sub, sub),
        )
    return st.recursive(leaves, extend, max_leaves=12)


def _parse_expr(text):
    p = Parser(text)
    e = p.expr()
    assert p.tok.kind == "eof"
    return e


@given(_exprs())
@settings(max_examples=400, deadline=None)
def test_expression_roundtrip(e):
    assert _parse_expr(fmt_expr(e)) == e


@pytest.mark.parametrize("path", ALL_FILES, ids=lambda p: p.stem)
def test_pretty_is_a_fixpoint_on_corpus(path):
    once = pretty(parse(path.read_text()))
    assert pretty(parse(once)) == once


@pytest.mark.parametrize("path", ALL_FILES, ids=lambda p: p.stem)
def test_core_pretty_reloads_to_same_core(path):
    core = load_program(path.read_text())
    text = pretty(core.root)
    assert pretty(load_program(text).root) == text


@pytest.mark.parametrize("src, exc", [
    ("x[0] = 1 $ 2;", LexError),
    ("x = 1;", ParseError),
    ("x[0] = ;", ParseError),
    ("while (a[0]) { b[0] = 1;", ParseError),
    ("x[0] = 99999999999;", ParseError),
    ("x[0] = f(1);", ElabError),
    ("int f(int a[]) { return g(a); } int g(int a[]) { return f(a); } x[0] = f(y);", ElabError),
    ("float x[1]; x[0] = 1;", ElabError),
    ("int x[1]; float x[1];", ElabError),
    ("semaphore s[2]; s[0] = 2;", ElabError),
    ("int x[1]; x[0][1] = 2;", ElabError),
])
def test_front_end_rejects(src, exc):
    with pytest.raises(exc):
        load_program(src)


def test_parse_error_has_position():
    with pytest.raises(ParseError) as ei:
        parse("a[0] = 1;\nb[0] = (2;\n", "t.pir")
    assert ei.value.line == 2
    assert str(ei.value).startswith("t.pir:2:")


def test_for_desugars_to_while():
    core = load_program("for (i[0] = 0; i[0] < 3; i[0]++) { a[i[0]] = i[0]; }")
    kinds = [type(s).__name__ for s in core.root]
    assert "While" in kinds and "For" not in kinds


def test_implicit_root_declarations_come_first():
    core = load_program("b[0] = a[0] + 1;")
    decls = [s.name for s in core.root if isinstance(s, A.Decl)]
    assert decls == ["b", "a"] or decls == ["a", "b"]
    assert isinstance(core.root[0], A.Decl)


def test_function_locals_are_prefixed():
    core = load_program("void f(int a[]) { int t[1]; t[0] = 1; a[0] = t[0]; } f(x); f(x);")
    names = {s.name for s in A.walk_stmts(core.root) if isinstance(s, A.Decl)}
    assert {"__f1_t", "__f2_t"} <= names


def test_value_argument_is_copied():
    core = load_program("int g(int v[]) { return v[0] * 2; } y[0] = g(3);")
    assigns = [s for s in A.walk_stmts(core.root) if isinstance(s, A.Assign)]
    assert assigns[0].name == "__g1_v"


def test_semaphore_arrays_detected():
    core = load_program("async { set(s[0], 1); } wait(s[0], 1);")
    assert core.sem_arrays == {"s"}


def test_hex_literal_wraps():
    core = load_program("x[0] = 0xFFFFFFFF;")
    assign = [s for s in core.root if isinstance(s, A.Assign)][0]
    assert assign.value == A.Const(-1)
