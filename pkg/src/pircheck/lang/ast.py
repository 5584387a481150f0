"""AST node types for the surface and core language.

Line numbers are excluded from equality so that two parses of
equivalent text compare equal regardless of layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

INT = "int"
FLOAT = "float"
SEMAPHORE = "semaphore"

BINARY_OPS = (
    "+", "-", "*", "/", "%", "<<", ">>", "&", "|", "^",
    "<", "<=", ">", ">=", "==", "!=", "&&", "||", "min", "max",
)
UNARY_OPS = ("-", "!", "~", "abs")


# -- expressions -------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: Union[int, float]


@dataclass(frozen=True)
class Load:
    name: str
    indices: tuple


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Ternary:
    cond: "Expr"
    then: "Expr"
    orelse: "Expr"


@dataclass(frozen=True)
class Name:
    """A bare array name; only legal as a call argument (pass by reference)."""
    name: str


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class SemRef:
    """Semaphore named by location: an array that only ever names semaphores.

    Produced by elaboration, never by the parser.
    """
    name: str
    indices: tuple


Expr = Union[Const, Load, Unary, Binary, Ternary, Name, Call, SemRef]


# -- statements --------------------------------------------------------------

@dataclass(eq=True)
class Stmt:
    # sid is assigned by elaboration (pre-order index in the core program)
    line: int = field(default=0, compare=False, kw_only=True)
    sid: int = field(default=-1, compare=False, kw_only=True, repr=False)


@dataclass(eq=True)
class Decl(Stmt):
    name: str
    kind: str = INT
    dims: tuple = (None,)


@dataclass(eq=True)
class Assign(Stmt):
    name: str
    indices: tuple
    value: Expr


@dataclass(eq=True)
class Async(Stmt):
    body: list


@dataclass(eq=True)
class SemOp(Stmt):
    op: str  # set | wait | acquire | release
    sem: Expr
    val: Expr


@dataclass(eq=True)
class While(Stmt):
    cond: Expr
    body: list


@dataclass(eq=True)
class If(Stmt):
    cond: Expr
    then: list
    orelse: list = field(default_factory=list)


@dataclass(eq=True)
class Block(Stmt):
    body: list


# surface-only statements, removed by elaboration

@dataclass(eq=True)
class For(Stmt):
    init: Optional[Stmt]
    cond: Optional[Expr]
    step: Optional[Stmt]
    body: list


@dataclass(eq=True)
class CallStmt(Stmt):
    call: Call


@dataclass(eq=True)
class Return(Stmt):
    value: Optional[Expr]


@dataclass(eq=True)
class Param:
    name: str
    kind: str
    rank: int


@dataclass(eq=True)
class FuncDef(Stmt):
    name: str
    ret: str  # int | float | void
    params: list
    body: list


SEM_OPS = ("set", "wait", "acquire", "release")
CORE_STMTS = (Decl, Assign, Async, SemOp, While, If)


@dataclass
class CoreProgram:
    """Elaborated program: only core statement kinds remain."""
    root: list
    kinds: dict            # array name -> int | float
    sem_arrays: frozenset  # names resolved as location-based semaphore arrays
    line_map: dict         # sid -> source line
    origin: str = "<string>"

    @property
    def decl_table(self) -> set:
        return set(self.kinds.items())


def walk_stmts(stmts):
    """Yield every statement in pre-order, descending into bodies."""
    stack = list(reversed(stmts))
    while stack:
        s = stack.pop()
        yield s
        kids = None
        if isinstance(s, (Async, While, Block, For, FuncDef)):
            kids = s.body
        elif isinstance(s, If):
            kids = s.then + s.orelse
        if kids:
            stack.extend(reversed(kids))


def walk_expr(e):
    stack = [e]
    while stack:
        x = stack.pop()
        yield x
        if isinstance(x, (Load, SemRef)):
            stack.extend(x.indices)
        elif isinstance(x, Unary):
            stack.append(x.operand)
        elif isinstance(x, Binary):
            stack.append(x.right)
            stack.append(x.left)
        elif isinstance(x, Ternary):
            stack.extend((x.orelse, x.then, x.cond))
        elif isinstance(x, Call):
            stack.extend(reversed(x.args))


def stmt_exprs(s):
    """Expressions directly owned by a statement (not its bodies)."""
    if isinstance(s, Assign):
        return list(s.indices) + [s.value]
    if isinstance(s, SemOp):
        return [s.sem, s.val]
    if isinstance(s, (While, If)):
        return [s.cond]
    if isinstance(s, CallStmt):
        return [s.call]
    if isinstance(s, Return):
        return [s.value] if s.value is not None else []
    if isinstance(s, For):
        return [s.cond] if s.cond is not None else []
    return []
