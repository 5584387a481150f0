"""Values, hash-consed symbolic nodes and expression evaluation.

A Value is a Python ``int`` (always kept in signed 32-bit range), a
``float``, a :class:`SymNode` or an :class:`Err`.  Concrete arithmetic
follows C with two's-complement wrapping; division by zero and
out-of-range shifts produce Err.
"""
from __future__ import annotations

import hashlib
import math
from typing import Union

from .lang import ast as A

LEAF = "leaf"
CONST = "const"
TERN = "?:"
NEG = "neg"

COMPARISONS = ("<", "<=", ">", ">=", "==", "!=")
LOGICAL = ("&&", "||")
AC_OPS = ("+", "*", "min", "max")


def wrap_i32(x: int) -> int:
    return ((x + 0x80000000) & 0xFFFFFFFF) - 0x80000000


class Err:
    """Stuck value. Absorbing under every operator."""

    __slots__ = ("category", "detail")

    def __init__(self, category: str, detail: str = ""):
        self.category = category
        self.detail = detail

    def __eq__(self, other):
        return isinstance(other, Err) and other.category == self.category

    def __hash__(self):
        return hash(("Err", self.category))

    def __repr__(self):
        return f"Err({self.category}: {self.detail})" if self.detail else f"Err({self.category})"


class SymNode:
    """One interned CDAG node.

    ``op`` is ``"leaf"`` (args = (name, index tuple)), ``"const"``
    (args = (value,)) or an operator name with child nodes as args.
    Structural equality is identity within one pool.
    """

    __slots__ = ("op", "args", "uid", "line", "kind", "_key", "_digest", "__weakref__")

    def __init__(self, op, args, uid, line, kind):
        self.op = op
        self.args = args
        self.uid = uid
        self.line = line
        self.kind = kind
        self._key = None
        self._digest = None

    @property
    def is_leaf(self):
        return self.op == LEAF

    @property
    def is_const(self):
        return self.op == CONST

    @property
    def children(self) -> tuple:
        return () if self.op in (LEAF, CONST) else self.args

    @property
    def value(self):
        return self.args[0]

    def __repr__(self):
        return f"Sym({to_prefix(self, max_len=200)})"


Value = Union[int, float, SymNode, Err]


class SymPool:
    """Intern table for SymNodes. Children must come from the same pool."""

    def __init__(self):
        self.table = {}
        self._uid = 0

    def __len__(self):
        return len(self.table)

    def _new(self, key, op, args, line, kind):
        n = SymNode(op, args, self._uid, line, kind)
        self._uid += 1
        self.table[key] = n
        return n

    def leaf(self, name: str, idx: tuple, kind: str = A.INT, line: int = 0) -> SymNode:
        key = (LEAF, name, idx, kind)
        n = self.table.get(key)
        return n if n is not None else self._new(key, LEAF, (name, idx), line, kind)

    def const(self, v, line: int = 0) -> SymNode:
        key = ("cf", v.hex()) if type(v) is float else ("ci", v)
        n = self.table.get(key)
        if n is None:
            n = self._new(key, CONST, (v,), line, A.FLOAT if type(v) is float else A.INT)
        return n

    def wrap(self, v, line: int = 0) -> SymNode:
        return v if type(v) is SymNode else self.const(v, line)

    def op(self, op: str, children: tuple, line: int = 0) -> SymNode:
        key = (op,) + children
        n = self.table.get(key)
        if n is None:
            if op in COMPARISONS or op in LOGICAL or op == "!":
                kind = A.INT
            elif op == TERN:
                kind = children[1].kind
            else:
                kind = children[0].kind
            n = self._new(key, op, children, line, kind)
        return n

    def intern(self, node: SymNode) -> SymNode:
        """Import a node (possibly from another pool) into this pool."""
        memo = {}
        for n in postorder([node]):
            memo[n] = self._import_one(n, memo)
        return memo[node]

    def import_many(self, nodes, memo=None) -> dict:
        memo = {} if memo is None else memo
        for n in postorder(nodes, skip=memo):
            memo[n] = self._import_one(n, memo)
        return memo

    def _import_one(self, n, memo):
        if n.op == LEAF:
            return self.leaf(n.args[0], n.args[1], n.kind, n.line)
        if n.op == CONST:
            return self.const(n.args[0], n.line)
        return self.op(n.op, tuple(memo[c] for c in n.args), n.line)


def postorder(roots, skip=None):
    """Yield every node reachable from roots once, children before parents.

    Nodes in ``skip`` (any container) are neither yielded nor descended into.
    """
    seen = set()
    done = seen.__contains__ if skip is None else (lambda n: n in seen or n in skip)
    stack = [(r, False) for r in reversed(list(roots)) if type(r) is SymNode]
    while stack:
        n, expanded = stack.pop()
        if done(n):
            continue
        if expanded or n.op in (LEAF, CONST):
            seen.add(n)
            yield n
            continue
        stack.append((n, True))
        for c in reversed(n.args):
            if not done(c):
                stack.append((c, False))


# -- concrete arithmetic ------------------------------------------------------

def _idiv(a, b):
    if b == 0:
        return Err("ArithError", "division by zero")
    q = abs(a) // abs(b)
    return wrap_i32(q if (a < 0) == (b < 0) else -q)


def _imod(a, b):
    if b == 0:
        return Err("ArithError", "modulo by zero")
    r = abs(a) % abs(b)
    return -r if a < 0 else r


def _shl(a, b):
    if b < 0 or b >= 32:
        return Err("ArithError", f"shift count {b} out of range")
    return wrap_i32(a << b)


def _shr(a, b):
    if b < 0 or b >= 32:
        return Err("ArithError", f"shift count {b} out of range")
    return a >> b


def _fdiv(a, b):
    if b == 0.0:
        return Err("ArithError", "division by zero")
    return a / b


INT_OPS = {
    "+": lambda a, b: wrap_i32(a + b),
    "-": lambda a, b: wrap_i32(a - b),
    "*": lambda a, b: wrap_i32(a * b),
    "/": _idiv,
    "%": _imod,
    "<<": _shl,
    ">>": _shr,
    "&": lambda a, b: a & b,
    "|": lambda a, b: a | b,
    "^": lambda a, b: a ^ b,
    "<": lambda a, b: int(a < b),
    "<=": lambda a, b: int(a <= b),
    ">": lambda a, b: int(a > b),
    ">=": lambda a, b: int(a >= b),
    "==": lambda a, b: int(a == b),
    "!=": lambda a, b: int(a != b),
    "&&": lambda a, b: int(a != 0 and b != 0),
    "||": lambda a, b: int(a != 0 or b != 0),
    "min": lambda a, b: a if a < b else b,
    "max": lambda a, b: a if a > b else b,
}

FLOAT_OPS = dict(INT_OPS)
FLOAT_OPS.update({
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _fdiv,
})
for _op in ("%", "<<", ">>", "&", "|", "^"):
    del FLOAT_OPS[_op]


def _bad_float_op(op):
    return Err("ArithError", f"operator {op} not defined on float")


def concrete_binop(op: str, a, b):
    if type(a) is float or type(b) is float:
        f = FLOAT_OPS.get(op)
        return f(a, b) if f is not None else _bad_float_op(op)
    return INT_OPS[op](a, b)


def concrete_unop(op: str, a):
    if op == "-" or op == NEG:
        return -a if type(a) is float else wrap_i32(-a)
    if op == "!":
        return int(a == 0)
    if op == "~":
        if type(a) is float:
            return _bad_float_op(op)
        return ~a
    if op == "abs":
        return abs(a) if type(a) is float else wrap_i32(abs(a))
    raise ValueError(f"unknown unary operator {op}")


# -- value combinators -----------------------------------------------------------

def val_binop(op: str, a: Value, b: Value, pool: SymPool, line: int = 0) -> Value:
    ta = type(a)
    tb = type(b)
    if ta is Err:
        return a
    if tb is Err:
        return b
    if ta is SymNode or tb is SymNode:
        if op == "&&":
            if ta is not SymNode and a == 0 or tb is not SymNode and b == 0:
                return 0
        elif op == "||":
            if ta is not SymNode and a != 0 or tb is not SymNode and b != 0:
                return 1
        return pool.op(op, (pool.wrap(a, line), pool.wrap(b, line)), line)
    return concrete_binop(op, a, b)


def val_unop(op: str, a: Value, pool: SymPool, line: int = 0) -> Value:
    ta = type(a)
    if ta is Err:
        return a
    if op == "-":
        op = NEG
    if ta is SymNode:
        return pool.op(op, (a,), line)
    return concrete_unop(op, a)


def val_tern(c: Value, a: Value, b: Value, pool: SymPool, line: int = 0) -> Value:
    for v in (c, a, b):
        if type(v) is Err:
            return v
    if type(c) is SymNode:
        return pool.op(TERN, (c, pool.wrap(a, line), pool.wrap(b, line)), line)
    return a if c != 0 else b


def index_value(v):
    """Check that an evaluated index is a usable concrete int; else return Err."""
    t = type(v)
    if t is int:
        if v < 0:
            return Err("ArithError", f"negative index {v}")
        return v
    if t is Err:
        return v
    if t is SymNode:
        return Err("SymbolicIndex", f"symbolic index {to_prefix(v, max_len=80)}")
    return Err("ArithError", f"non-integer index {v!r}")


def eval_expr(e, M, task, pool: SymPool, kinds=None) -> Value:
    """Reference evaluator: reads through ``M.var_eval`` and never mutates M."""
    if isinstance(e, A.Const):
        return e.value
    if isinstance(e, A.Load):
        idx = []
        for ie in e.indices:
            v = index_value(eval_expr(ie, M, task, pool, kinds))
            if type(v) is Err:
                return v
            idx.append(v)
        idx = tuple(idx)
        got = M.var_eval(task, e.name, idx)
        if got is None:
            kind = (kinds or {}).get(e.name, A.INT)
            return pool.leaf(e.name, idx, kind)
        return got
    if isinstance(e, A.Unary):
        return val_unop(e.op, eval_expr(e.operand, M, task, pool, kinds), pool)
    if isinstance(e, A.Binary):
        a = eval_expr(e.left, M, task, pool, kinds)
        b = eval_expr(e.right, M, task, pool, kinds)
        return val_binop(e.op, a, b, pool)
    if isinstance(e, A.Ternary):
        c = eval_expr(e.cond, M, task, pool, kinds)
        a = eval_expr(e.then, M, task, pool, kinds)
        b = eval_expr(e.orelse, M, task, pool, kinds)
        return val_tern(c, a, b, pool)
    raise TypeError(f"cannot evaluate {e!r}")


# -- node utilities --------------------------------------------------------------

def _fmt_const(v) -> str:
    if type(v) is float:
        if math.isnan(v) or math.isinf(v):
            return repr(v)
        r = repr(v)
        return r if ("." in r or "e" in r) else r + ".0"
    return str(v)


def fmt_leaf(name, idx) -> str:
    return name + "".join(f"[{i}]" for i in idx)


def to_prefix(node, max_len=None) -> str:
    """Prefix text of a value, e.g. ``*(+(A[0],1),2)``.

    With ``max_len`` the text is cut off (shared DAGs can expand
    exponentially when printed as trees).
    """
    if type(node) is not SymNode:
        return repr(node) if type(node) is Err else _fmt_const(node)
    out = []
    budget = [max_len if max_len is not None else -1]
    stack = [node]
    while stack:
        x = stack.pop()
        if type(x) is str:
            out.append(x)
        elif x.op == LEAF:
            out.append(fmt_leaf(*x.args))
        elif x.op == CONST:
            out.append(_fmt_const(x.args[0]))
        else:
            out.append(x.op + "(")
            stack.append(")")
            for i, c in enumerate(reversed(x.args)):
                stack.append(c)
                if i != len(x.args) - 1:
                    stack.append(",")
        if budget[0] >= 0:
            budget[0] -= len(out[-1])
            if budget[0] < 0:
                return "".join(out)[:max_len] + "..."
    return "".join(out)


class _Digested:
    def __contains__(self, n):
        return n._digest is not None


_DIGESTED = _Digested()


def digest(node) -> bytes:
    """Structural 16-byte digest; equal for structurally equal nodes in any pool."""
    if type(node) is not SymNode:
        return hashlib.blake2b(("c:" + type(node).__name__ + ":" + repr(node)).encode(),
                               digest_size=16).digest()
    for n in postorder([node], skip=_DIGESTED):
        h = hashlib.blake2b(digest_size=16)
        if n.op == LEAF:
            h.update(f"L:{n.kind}:{fmt_leaf(*n.args)}".encode())
        elif n.op == CONST:
            v = n.args[0]
            h.update(f"C:{v.hex() if type(v) is float else v}".encode())
        else:
            h.update(f"O:{n.op}:{len(n.args)}".encode())
            for c in n.args:
                h.update(c._digest)
        n._digest = h.digest()
    return node._digest


def evaluate(node, env, default=None, memo=None):
    """Concretely evaluate a value; leaves are looked up in env[(name, idx)].

    Missing leaves use ``default(name, idx)`` when given, else KeyError.
    Pass the same ``memo`` dict to share work across values evaluated
    under one env.  Returns a concrete number or an Err.
    """
    if type(node) is not SymNode:
        return node
    vals = {} if memo is None else memo
    for n in postorder([node], skip=vals):
        if n.op == LEAF:
            key = (n.args[0], n.args[1])
            if key in env:
                vals[n] = env[key]
            elif default is not None:
                vals[n] = env.setdefault(key, default(*key))
            else:
                raise KeyError(key)
            continue
        if n.op == CONST:
            vals[n] = n.args[0]
            continue
        args = [vals[c] for c in n.args]
        for v in args:
            if type(v) is Err:
                vals[n] = v
                break
        else:
            if n.op == TERN:
                vals[n] = args[1] if args[0] != 0 else args[2]
            elif len(args) == 1:
                vals[n] = concrete_unop(n.op, args[0])
            else:
                acc = args[0]
                for v in args[1:]:
                    acc = concrete_binop(n.op, acc, v)
                    if type(acc) is Err:
                        break
                vals[n] = acc
    return vals[node]


def values_equal(a, b) -> bool:
    """Concrete equality used by comparisons (NaN equals NaN, int never equals float)."""
    if type(a) is not type(b):
        return False
    if type(a) is float:
        return a == b or (math.isnan(a) and math.isnan(b))
    return a == b
