"""Recursive-descent parser producing the surface AST."""
from __future__ import annotations

from . import ast as A
from .lexer import Token, tokenize


class ParseError(Exception):
    def __init__(self, msg, line, col, origin="<string>"):
        super().__init__(f"{origin}:{line}:{col}: {msg}")
        self.line = line
        self.col = col
        self.msg = msg


# binary precedence, loosest first (ternary handled separately)
_LEVELS = [
    ("||",),
    ("&&",),
    ("|",),
    ("^",),
    ("&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("<<", ">>"),
    ("+", "-"),
    ("*", "/", "%"),
]
PRECEDENCE = {op: i + 1 for i, ops in enumerate(_LEVELS) for op in ops}

_COMPOUND = {"+=": "+", "-=": "-", "*=": "*", "/=": "/", "%=": "%",
             "<<=": "<<", ">>=": ">>", "&=": "&", "|=": "|", "^=": "^"}

INT_MIN = -(1 << 31)


def wrap_i32(x: int) -> int:
    return ((x + 0x80000000) & 0xFFFFFFFF) - 0x80000000


class Parser:
    def __init__(self, text: str, origin: str = "<string>"):
        self.origin = origin
        self.toks = tokenize(text, origin)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text) -> bool:
        t = self.tok
        return t.text == text and t.kind in ("punct", "kw")

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def error(self, expected, tok=None):
        tok = tok or self.tok
        found = repr(tok.text) if tok.kind != "eof" else "end of input"
        raise ParseError(f"expected {expected}, found {found}", tok.line, tok.col, self.origin)

    def expect(self, text) -> Token:
        if not self.at(text):
            self.error(repr(text))
        return self.advance()

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            self.error("identifier")
        return self.advance()

    # -- program
    def program(self) -> list:
        items = []
        while self.tok.kind != "eof":
            if self._at_funcdef():
                items.append(self.funcdef())
            else:
                items.extend(self.statement())
        return items

    def _at_funcdef(self):
        return (self.tok.kind == "kw" and self.tok.text in ("int", "float", "void")
                and self.peek().kind == "ident" and self.peek(2).text == "(")

    def funcdef(self) -> A.FuncDef:
        line = self.tok.line
        ret = self.advance().text
        name = self.ident().text
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                if not (self.tok.kind == "kw" and self.tok.text in ("int", "float")):
                    self.error("parameter type 'int' or 'float'")
                kind = self.advance().text
                pname = self.ident().text
                rank = 0
                while self.at("["):
                    self.advance()
                    if self.tok.kind == "int":
                        self.advance()
                    self.expect("]")
                    rank += 1
                params.append(A.Param(pname, kind, rank))
                if not self.at(","):
                    break
                self.advance()
        self.expect(")")
        body = self.block_body()
        return A.FuncDef(name, ret, params, body, line=line)

    def block_body(self) -> list:
        self.expect("{")
        body = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.error("'}'")
            body.extend(self.statement())
        self.advance()
        return body

    # -- statements (a declaration list may yield several statements)
    def statement(self) -> list:
        t = self.tok
        line = t.line
        if t.kind == "kw":
            kw = t.text
            if kw in ("int", "float", "semaphore"):
                return self.decl()
            if kw == "async":
                self.advance()
                return [A.Async(self.block_body(), line=line)]
            if kw in A.SEM_OPS:
                self.advance()
                self.expect("(")
                sem = self.expr()
                self.expect(",")
                val = self.expr()
                self.expect(")")
                self.expect(";")
                return [A.SemOp(kw, sem, val, line=line)]
            if kw == "while":
                self.advance()
                self.expect("(")
                cond = self.expr()
                self.expect(")")
                return [A.While(cond, self.body(), line=line)]
            if kw == "if":
                self.advance()
                self.expect("(")
                cond = self.expr()
                self.expect(")")
                then = self.body()
                orelse = []
                if self.at("else"):
                    self.advance()
                    orelse = self.body()
                return [A.If(cond, then, orelse, line=line)]
            if kw == "for":
                return [self.for_stmt()]
            if kw == "return":
                self.advance()
                val = None if self.at(";") else self.expr()
                self.expect(";")
                return [A.Return(val, line=line)]
            self.error("statement")
        if self.at("{"):
            return [A.Block(self.block_body(), line=line)]
        if self.at(";"):
            self.advance()
            return []
        s = self.simple()
        self.expect(";")
        return [s]

    def body(self) -> list:
        if self.at("{"):
            return self.block_body()
        return self.statement()

    def decl(self) -> list:
        line = self.tok.line
        kind = self.advance().text
        out = []
        while True:
            name = self.ident().text
            dims = []
            if not self.at("["):
                self.error("'[' (all variables are arrays; declare as " + name + "[])")
            while self.at("["):
                self.advance()
                if self.tok.kind == "int":
                    dims.append(int(self.advance().text, 0))
                else:
                    dims.append(None)
                self.expect("]")
            out.append(A.Decl(name, kind, tuple(dims), line=line))
            if not self.at(","):
                break
            self.advance()
        self.expect(";")
        return out

    def for_stmt(self) -> A.For:
        line = self.advance().line
        self.expect("(")
        init = None if self.at(";") else self.simple()
        self.expect(";")
        cond = None if self.at(";") else self.expr()
        self.expect(";")
        step = None if self.at(")") else self.simple()
        self.expect(")")
        return A.For(init, cond, step, self.body(), line=line)

    def simple(self) -> A.Stmt:
        """Assignment, compound assignment, ++/--, or a call."""
        line = self.tok.line
        if self.at("++") or self.at("--"):
            op = self.advance().text
            name, idx = self.lvalue()
            return A.Assign(name, idx, A.Binary(op[0], A.Load(name, idx), A.Const(1)), line=line)
        if self.tok.kind != "ident":
            self.error("statement")
        if self.peek().text == "(":
            call = self.primary()
            return A.CallStmt(call, line=line)
        name, idx = self.lvalue()
        t = self.tok
        if t.text == "=":
            self.advance()
            return A.Assign(name, idx, self.expr(), line=line)
        if t.text in _COMPOUND:
            self.advance()
            rhs = self.expr()
            return A.Assign(name, idx, A.Binary(_COMPOUND[t.text], A.Load(name, idx), rhs), line=line)
        if t.text in ("++", "--"):
            self.advance()
            return A.Assign(name, idx, A.Binary(t.text[0], A.Load(name, idx), A.Const(1)), line=line)
        self.error("'=' or compound assignment")

    def lvalue(self):
        tok = self.ident()
        if not self.at("["):
            self.error(f"'[' (bare scalar '{tok.text}' is not allowed; write {tok.text}[0])")
        return tok.text, self.subscripts()

    def subscripts(self) -> tuple:
        idx = []
        while self.at("["):
            self.advance()
            idx.append(self.expr())
            self.expect("]")
        return tuple(idx)

    # -- expressions
    def expr(self):
        cond = self.binary(1)
        if self.at("?"):
            self.advance()
            then = self.expr()
            self.expect(":")
            orelse = self.expr()
            return A.Ternary(cond, then, orelse)
        return cond

    def binary(self, level):
        if level > len(_LEVELS):
            return self.unary()
        ops = _LEVELS[level - 1]
        left = self.binary(level + 1)
        while self.tok.kind == "punct" and self.tok.text in ops:
            op = self.advance().text
            right = self.binary(level + 1)
            left = A.Binary(op, left, right)
        return left

    def unary(self):
        if self.tok.kind == "punct" and self.tok.text in ("-", "!", "~", "+"):
            op = self.advance().text
            operand = self.unary()
            return operand if op == "+" else A.Unary(op, operand)
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "int":
            self.advance()
            v = int(t.text, 0)
            if v > 0xFFFFFFFF:
                raise ParseError(f"integer literal {t.text} does not fit in 32 bits", t.line, t.col, self.origin)
            return A.Const(wrap_i32(v))
        if t.kind == "float":
            self.advance()
            return A.Const(float(t.text.rstrip("fF")))
        if t.kind == "ident":
            self.advance()
            if self.at("["):
                return A.Load(t.text, self.subscripts())
            if self.at("("):
                self.advance()
                args = []
                if not self.at(")"):
                    while True:
                        args.append(self.call_arg())
                        if not self.at(","):
                            break
                        self.advance()
                self.expect(")")
                return A.Call(t.text, tuple(args))
            self.error(f"'[' (bare scalar '{t.text}' is not allowed; write {t.text}[0])", self.tok)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.error("expression")

    def call_arg(self):
        t = self.tok
        if t.kind == "ident" and self.peek().text in (",", ")"):
            self.advance()
            return A.Name(t.text)
        return self.expr()


def parse(text: str, origin: str = "<string>") -> list:
    """Parse source text into a list of surface statements and function definitions."""
    return Parser(text, origin).program()
