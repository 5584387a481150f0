"""Pretty-printer: AST back to .pir text (re-parses to the same AST)."""
from __future__ import annotations

from . import ast as A
from .parser import PRECEDENCE

_TERNARY = 0
_UNARY = 20
_ATOM = 30


def _const(v) -> str:
    if isinstance(v, float):
        r = repr(v)
        if r in ("inf", "-inf", "nan"):
            raise ValueError(f"float constant {r} has no source form")
        if "." not in r and "e" not in r:
            r += ".0"
        return r
    if v < 0:
        # parser wraps hex literals, so this reads back as the same constant
        return hex(v & 0xFFFFFFFF)
    return str(v)


def expr_prec(e) -> int:
    if isinstance(e, A.Ternary):
        return _TERNARY
    if isinstance(e, A.Binary) and e.op in PRECEDENCE:
        return PRECEDENCE[e.op]
    if isinstance(e, A.Unary) and e.op != "abs":
        return _UNARY
    if isinstance(e, A.Const) and isinstance(e.value, float) and e.value < 0:
        return _UNARY
    return _ATOM


def fmt_expr(e) -> str:
    if isinstance(e, A.Const):
        if isinstance(e.value, float) and (e.value < 0 or str(e.value)[0] == "-"):
            return "-" + _const(-e.value)
        return _const(e.value)
    if isinstance(e, (A.Load, A.SemRef)):
        return e.name + "".join(f"[{fmt_expr(i)}]" for i in e.indices)
    if isinstance(e, A.Name):
        return e.name
    if isinstance(e, A.Call):
        return f"{e.name}({', '.join(fmt_expr(a) for a in e.args)})"
    if isinstance(e, A.Unary):
        if e.op == "abs":
            return f"abs({fmt_expr(e.operand)})"
        inner = fmt_expr(e.operand)
        if expr_prec(e.operand) < _UNARY:
            inner = f"({inner})"
        # avoid "--x" lexing as a decrement token
        sep = " " if inner[:1] in ("-", "+", "!", "~") else ""
        return f"{e.op}{sep}{inner}"
    if isinstance(e, A.Binary):
        if e.op in ("min", "max"):
            return f"{e.op}({fmt_expr(e.left)}, {fmt_expr(e.right)})"
        p = PRECEDENCE[e.op]
        left = fmt_expr(e.left)
        if expr_prec(e.left) < p:
            left = f"({left})"
        right = fmt_expr(e.right)
        if expr_prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, A.Ternary):
        cond = fmt_expr(e.cond)
        if expr_prec(e.cond) <= _TERNARY:
            cond = f"({cond})"
        return f"{cond} ? {fmt_expr(e.then)} : {fmt_expr(e.orelse)}"
    raise TypeError(f"not an expression: {e!r}")


def _fmt_simple(s) -> str:
    if isinstance(s, A.Assign):
        idx = "".join(f"[{fmt_expr(i)}]" for i in s.indices)
        return f"{s.name}{idx} = {fmt_expr(s.value)}"
    if isinstance(s, A.CallStmt):
        return fmt_expr(s.call)
    raise TypeError(f"not a simple statement: {s!r}")


def fmt_stmts(stmts, indent=0) -> list[str]:
    pad = "  " * indent
    out = []
    for s in stmts:
        if isinstance(s, A.Decl):
            dims = "".join("[]" if d is None else f"[{d}]" for d in s.dims)
            out.append(f"{pad}{s.kind} {s.name}{dims};")
        elif isinstance(s, (A.Assign, A.CallStmt)):
            out.append(f"{pad}{_fmt_simple(s)};")
        elif isinstance(s, A.Async):
            out.append(f"{pad}async {{")
            out += fmt_stmts(s.body, indent + 1)
            out.append(f"{pad}}}")
        elif isinstance(s, A.SemOp):
            out.append(f"{pad}{s.op}({fmt_expr(s.sem)}, {fmt_expr(s.val)});")
        elif isinstance(s, A.While):
            out.append(f"{pad}while ({fmt_expr(s.cond)}) {{")
            out += fmt_stmts(s.body, indent + 1)
            out.append(f"{pad}}}")
        elif isinstance(s, A.If):
            out.append(f"{pad}if ({fmt_expr(s.cond)}) {{")
            out += fmt_stmts(s.then, indent + 1)
            if s.orelse:
                out.append(f"{pad}}} else {{")
                out += fmt_stmts(s.orelse, indent + 1)
            out.append(f"{pad}}}")
        elif isinstance(s, A.Block):
            out.append(f"{pad}{{")
            out += fmt_stmts(s.body, indent + 1)
            out.append(f"{pad}}}")
        elif isinstance(s, A.For):
            init = _fmt_simple(s.init) if s.init else ""
            cond = fmt_expr(s.cond) if s.cond is not None else ""
            step = _fmt_simple(s.step) if s.step else ""
            out.append(f"{pad}for ({init}; {cond}; {step}) {{")
            out += fmt_stmts(s.body, indent + 1)
            out.append(f"{pad}}}")
        elif isinstance(s, A.Return):
            out.append(f"{pad}return{'' if s.value is None else ' ' + fmt_expr(s.value)};")
        elif isinstance(s, A.FuncDef):
            params = ", ".join(f"{p.kind} {p.name}{'[]' * p.rank}" for p in s.params)
            out.append(f"{pad}{s.ret} {s.name}({params}) {{")
            out += fmt_stmts(s.body, indent + 1)
            out.append(f"{pad}}}")
        else:
            raise TypeError(f"not a statement: {s!r}")
    return out


def pretty(stmts) -> str:
    return "\n".join(fmt_stmts(stmts)) + "\n"
