"""Elaboration: surface AST -> core program.

Desugars for-loops and blocks, inlines function calls, resolves
semaphore arrays, adds implicit root declarations and checks element
kinds (no int/float mixing).
"""
from __future__ import annotations

import copy
import itertools

from . import ast as A

BUILTINS = {"min": 2, "max": 2, "abs": 1}
INTERNAL_PREFIX = "__"


class ElabError(Exception):
    def __init__(self, msg, line=0, origin="<string>"):
        super().__init__(f"{origin}:{line}: {msg}" if line else f"{origin}: {msg}")
        self.msg = msg
        self.line = line


class _Elaborator:
    def __init__(self, funcs, origin):
        self.funcs = funcs
        self.origin = origin
        self.counter = itertools.count(1)
        self.sem_declared = {}

    def err(self, msg, line):
        raise ElabError(msg, line, self.origin)

    # -- expressions
    def lift(self, e, env, line):
        """Return (pre-statements, expression) with calls hoisted out."""
        if isinstance(e, A.Const):
            return [], e
        if isinstance(e, A.Load):
            pre, idx = self.lift_all(e.indices, env, line)
            return pre, A.Load(env.get(e.name, e.name), idx)
        if isinstance(e, A.Unary):
            pre, x = self.lift(e.operand, env, line)
            return pre, A.Unary(e.op, x)
        if isinstance(e, A.Binary):
            p1, l = self.lift(e.left, env, line)
            p2, r = self.lift(e.right, env, line)
            return p1 + p2, A.Binary(e.op, l, r)
        if isinstance(e, A.Ternary):
            pre, (c, t, f) = self.lift_all((e.cond, e.then, e.orelse), env, line)
            return pre, A.Ternary(c, t, f)
        if isinstance(e, A.Call):
            if e.name not in self.funcs and e.name in BUILTINS:
                if len(e.args) != BUILTINS[e.name]:
                    self.err(f"{e.name} expects {BUILTINS[e.name]} argument(s)", line)
                if any(isinstance(a, A.Name) for a in e.args):
                    self.err(f"{e.name} takes values, not array names", line)
                pre, args = self.lift_all(e.args, env, line)
                if e.name == "abs":
                    return pre, A.Unary("abs", args[0])
                return pre, A.Binary(e.name, args[0], args[1])
            pre, result = self.inline(e, env, line)
            if result is None:
                self.err(f"void function '{e.name}' used as a value", line)
            return pre, result
        if isinstance(e, A.Name):
            self.err(f"bare array name '{e.name}' is only allowed as a call argument", line)
        self.err(f"unexpected expression {e!r}", line)

    def lift_all(self, exprs, env, line):
        pre = []
        out = []
        for x in exprs:
            p, y = self.lift(x, env, line)
            pre += p
            out.append(y)
        return pre, tuple(out)

    # -- inlining
    def inline(self, call, env, line):
        f = self.funcs.get(call.name)
        if f is None:
            self.err(f"unknown function '{call.name}'", line)
        if len(call.args) != len(f.params):
            self.err(f"'{f.name}' expects {len(f.params)} argument(s), got {len(call.args)}", line)
        k = next(self.counter)
        prefix = f"{INTERNAL_PREFIX}{f.name}{k}_"
        pre = []
        inner = {}
        for p, arg in zip(f.params, call.args):
            if isinstance(arg, A.Name):
                inner[p.name] = env.get(arg.name, arg.name)
                continue
            p_pre, val = self.lift(arg, env, line)
            tmp = prefix + p.name
            pre += p_pre
            pre.append(A.Decl(tmp, p.kind, (None,) * max(p.rank, 1), line=line))
            pre.append(A.Assign(tmp, (A.Const(0),) * max(p.rank, 1), val, line=line))
            inner[p.name] = tmp
        params = {p.name for p in f.params}
        for s in A.walk_stmts(f.body):
            if isinstance(s, A.Decl) and s.name not in params:
                inner[s.name] = prefix + s.name
        body = list(f.body)
        ret = None
        if body and isinstance(body[-1], A.Return):
            ret = body.pop()
        for s in A.walk_stmts(body):
            if isinstance(s, A.Return):
                self.err("return must be the last statement of a function", s.line)
            if isinstance(s, A.FuncDef):
                self.err("nested function definitions are not supported", s.line)
        if f.ret == "void":
            if ret is not None and ret.value is not None:
                self.err(f"void function '{f.name}' returns a value", ret.line)
            pre += self.stmts(body, inner)
            return pre, None
        if ret is None or ret.value is None:
            self.err(f"function '{f.name}' must end with 'return <expr>;'", f.line)
        ret_name = prefix + "ret"
        pre.append(A.Decl(ret_name, f.ret, (None,), line=ret.line))
        pre += self.stmts(body, inner)
        r_pre, r_val = self.lift(ret.value, inner, ret.line)
        pre += r_pre
        pre.append(A.Assign(ret_name, (A.Const(0),), r_val, line=ret.line))
        return pre, A.Load(ret_name, (A.Const(0),))

    # -- statements
    def stmts(self, stmts, env):
        out = []
        for s in stmts:
            out += self.stmt(s, env)
        return out

    def stmt(self, s, env):
        line = s.line
        if isinstance(s, A.Decl):
            name = env.get(s.name, s.name)
            if s.kind == A.SEMAPHORE:
                self.sem_declared.setdefault(name, line)
                return []
            return [A.Decl(name, s.kind, s.dims, line=line)]
        if isinstance(s, A.Assign):
            pre, idx = self.lift_all(s.indices, env, line)
            p2, val = self.lift(s.value, env, line)
            return pre + p2 + [A.Assign(env.get(s.name, s.name), idx, val, line=line)]
        if isinstance(s, A.Async):
            return [A.Async(self.stmts(s.body, env), line=line)]
        if isinstance(s, A.SemOp):
            pre, (sem, val) = self.lift_all((s.sem, s.val), env, line)
            return pre + [A.SemOp(s.op, sem, val, line=line)]
        if isinstance(s, A.While):
            pre, cond = self.lift(s.cond, env, line)
            body = self.stmts(s.body, env)
            # the condition's hoisted calls re-run at the end of every iteration
            return pre + [A.While(cond, body + copy.deepcopy(pre), line=line)]
        if isinstance(s, A.If):
            pre, cond = self.lift(s.cond, env, line)
            return pre + [A.If(cond, self.stmts(s.then, env), self.stmts(s.orelse, env), line=line)]
        if isinstance(s, A.Block):
            return self.stmts(s.body, env)
        if isinstance(s, A.For):
            cond = s.cond if s.cond is not None else A.Const(1)
            body = list(s.body) + ([s.step] if s.step is not None else [])
            loop = A.While(cond, body, line=line)
            return self.stmts(([s.init] if s.init is not None else []) + [loop], env)
        if isinstance(s, A.CallStmt):
            c = s.call
            if c.name not in self.funcs and c.name in BUILTINS:
                self.err(f"result of builtin '{c.name}' is unused", line)
            pre, _ = self.inline(c, env, line)
            return pre
        if isinstance(s, A.Return):
            self.err("return outside of a function", line)
        if isinstance(s, A.FuncDef):
            self.err("nested function definitions are not supported", line)
        self.err(f"unexpected statement {s!r}", line)


def _check_recursion(funcs, origin):
    calls = {}
    for f in funcs.values():
        names = set()
        for s in A.walk_stmts(f.body):
            for e in A.stmt_exprs(s):
                for x in A.walk_expr(e):
                    if isinstance(x, A.Call) and x.name in funcs:
                        names.add(x.name)
        calls[f.name] = sorted(names)
    state = {}

    def visit(name, path):
        state[name] = 1
        for g in calls[name]:
            if state.get(g) == 1:
                cyc = path[path.index(g):] + [g]
                raise ElabError("recursion is not supported: " + " -> ".join(cyc),
                                funcs[g].line, origin)
            if g not in state:
                visit(g, path + [g])
        state[name] = 2

    for name in sorted(funcs):
        if name not in state:
            visit(name, [name])


def _expr_sites(stmts):
    """Yield (expr, line, role) for every expression in the program."""
    for s in A.walk_stmts(stmts):
        if isinstance(s, A.Assign):
            for i in s.indices:
                yield i, s.line, "expr"
            yield s.value, s.line, "expr"
        elif isinstance(s, A.SemOp):
            yield s.sem, s.line, "sem"
            yield s.val, s.line, "expr"
        elif isinstance(s, (A.While, A.If)):
            yield s.cond, s.line, "expr"


class _Typer:
    def __init__(self, kinds, origin):
        self.kinds = kinds
        self.origin = origin
        self.ranks = {}

    def rank(self, name, r, line):
        old = self.ranks.setdefault(name, (r, line))
        if old[0] != r:
            raise ElabError(f"'{name}' used with {r} subscript(s) here but {old[0]} on line {old[1]}",
                            line, self.origin)

    def kind(self, e, line):
        if isinstance(e, A.Const):
            return A.FLOAT if isinstance(e.value, float) else A.INT
        if isinstance(e, (A.Load, A.SemRef)):
            self.rank(e.name, len(e.indices), line)
            for i in e.indices:
                if self.kind(i, line) != A.INT:
                    raise ElabError(f"index of '{e.name}' must be int", line, self.origin)
            return self.kinds.get(e.name, A.INT)
        if isinstance(e, A.Unary):
            k = self.kind(e.operand, line)
            if e.op == "!":
                return A.INT
            if e.op == "~" and k != A.INT:
                raise ElabError("'~' requires an int operand", line, self.origin)
            return k
        if isinstance(e, A.Binary):
            k1 = self.kind(e.left, line)
            k2 = self.kind(e.right, line)
            if k1 != k2:
                raise ElabError(f"mixed int/float operands to '{e.op}'", line, self.origin)
            if e.op in ("%", "<<", ">>", "&", "|", "^") and k1 != A.INT:
                raise ElabError(f"'{e.op}' requires int operands", line, self.origin)
            if e.op in ("<", "<=", ">", ">=", "==", "!=", "&&", "||"):
                return A.INT
            return k1
        if isinstance(e, A.Ternary):
            self.kind(e.cond, line)
            k1 = self.kind(e.then, line)
            k2 = self.kind(e.orelse, line)
            if k1 != k2:
                raise ElabError("mixed int/float branches in '?:'", line, self.origin)
            return k1
        raise ElabError(f"unexpected expression {e!r}", line, self.origin)


def _to_semref(e, sem_arrays):
    if isinstance(e, A.Load) and e.name in sem_arrays:
        return A.SemRef(e.name, e.indices)
    return e


def elaborate(items: list, origin: str = "<string>") -> A.CoreProgram:
    """Turn a parsed surface program into a CoreProgram."""
    funcs = {}
    main = []
    for it in items:
        if isinstance(it, A.FuncDef):
            if it.name in funcs:
                raise ElabError(f"function '{it.name}' defined twice", it.line, origin)
            funcs[it.name] = it
        else:
            main.append(it)
    _check_recursion(funcs, origin)

    el = _Elaborator(funcs, origin)
    root = el.stmts(main, {})

    # declared kinds
    kinds = {}
    decl_line = {}
    for s in A.walk_stmts(root):
        if isinstance(s, A.Decl):
            if kinds.setdefault(s.name, s.kind) != s.kind:
                raise ElabError(f"'{s.name}' declared as both {kinds[s.name]} and {s.kind}", s.line, origin)
            decl_line.setdefault(s.name, s.line)
    for name, line in el.sem_declared.items():
        if name in kinds:
            raise ElabError(f"'{name}' declared as both semaphore and {kinds[name]}", line, origin)

    # classify names: semaphore arrays are only ever the root of a semaphore id
    first_use = {}
    other_use = set()
    sem_root_use = set()
    assigned = set()
    for s in A.walk_stmts(root):
        if isinstance(s, A.Assign):
            assigned.add(s.name)
            first_use.setdefault(s.name, s.line)
    for e, line, role in _expr_sites(root):
        if role == "sem" and isinstance(e, A.Load):
            sem_root_use.add(e.name)
            first_use.setdefault(e.name, line)
            subs = e.indices
        else:
            subs = (e,)
        for sub in subs:
            for x in A.walk_expr(sub):
                if isinstance(x, A.Load):
                    other_use.add(x.name)
                    first_use.setdefault(x.name, line)
    sem_arrays = set(el.sem_declared)
    for name in sem_root_use:
        if name not in kinds and name not in assigned and name not in other_use:
            sem_arrays.add(name)
    for name in el.sem_declared:
        if name in assigned or name in other_use:
            raise ElabError(f"semaphore array '{name}' used as data", el.sem_declared[name], origin)

    for s in A.walk_stmts(root):
        if isinstance(s, A.SemOp):
            s.sem = _to_semref(s.sem, sem_arrays)

    # implicit root declarations for names never declared anywhere
    implicit = []
    for name in sorted(first_use, key=lambda n: (first_use[n], n)):
        if name not in kinds and name not in sem_arrays:
            kinds[name] = A.INT
            implicit.append(A.Decl(name, A.INT, (None,), line=first_use[name]))
    root = implicit + root

    typer = _Typer(kinds, origin)
    for s in A.walk_stmts(root):
        if isinstance(s, A.Decl):
            typer.rank(s.name, len(s.dims), s.line)
        elif isinstance(s, A.Assign):
            tk = typer.kind(A.Load(s.name, s.indices), s.line)
            vk = typer.kind(s.value, s.line)
            if tk != vk:
                raise ElabError(f"assigning {vk} value to {tk} array '{s.name}'", s.line, origin)
        elif isinstance(s, A.SemOp):
            if typer.kind(s.sem, s.line) != A.INT or typer.kind(s.val, s.line) != A.INT:
                raise ElabError(f"{s.op} arguments must be int", s.line, origin)
        elif isinstance(s, (A.While, A.If)):
            typer.kind(s.cond, s.line)

    line_map = {}
    for sid, s in enumerate(A.walk_stmts(root)):
        if not isinstance(s, A.CORE_STMTS):
            raise ElabError(f"internal: non-core statement {type(s).__name__} survived", s.line, origin)
        s.sid = sid
        line_map[sid] = s.line
    return A.CoreProgram(root, kinds, frozenset(sem_arrays), line_map, origin)


def load_program(text: str, origin: str = "<string>") -> A.CoreProgram:
    from .parser import parse
    return elaborate(parse(text, origin), origin)


def load_file(path) -> A.CoreProgram:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return load_program(text, str(path))
