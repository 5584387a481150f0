"""Verification verdicts that abort a run."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class Category(str, Enum):
    RACE = "Race"
    DEADLOCK = "Deadlock"
    SYMBOLIC_CONTROL_FLOW = "SymbolicControlFlow"
    SYMBOLIC_INDEX = "SymbolicIndex"
    SYMBOLIC_SEM_ARG = "SymbolicSemArg"
    DOUBLE_SET = "DoubleSet"
    DOUBLE_ACQUIRE_MATCH = "DoubleAcquireMatch"
    PARALLEL_ACQUIRES = "ParallelAcquires"
    OVER_RELEASE = "OverRelease"
    SEM_KIND_CONFLICT = "SemKindConflict"
    UNDECLARED_WRITE = "UndeclaredWrite"
    ARITH_ERROR = "ArithError"
    BUDGET_EXCEEDED = "BudgetExceeded"

    def __str__(self):
        return self.value


# graph validity item number for the categories that come from it
VALIDITY_ITEM = {
    Category.RACE: 1,
    Category.DOUBLE_SET: 2,
    Category.DOUBLE_ACQUIRE_MATCH: 3,
    Category.PARALLEL_ACQUIRES: 4,
    Category.OVER_RELEASE: 5,
}

# the semantic rule each category comes from
RULE = {
    Category.RACE: "validity item 1: no two conflicting accesses may happen in parallel",
    Category.DOUBLE_SET: "validity item 2: a wait has exactly one corresponding set",
    Category.DOUBLE_ACQUIRE_MATCH: "validity item 3: a release corresponds to at most one acquire",
    Category.PARALLEL_ACQUIRES: "validity item 4: acquires on one semaphore are ordered",
    Category.OVER_RELEASE: "validity item 5: corresponding releases never exceed the acquire value",
    Category.DEADLOCK: "final state with unfinished tasks",
    Category.SYMBOLIC_CONTROL_FLOW: "while/if condition evaluates to a symbolic value or err",
    Category.SYMBOLIC_INDEX: "assignment index evaluates to a symbolic value or err",
    Category.SYMBOLIC_SEM_ARG: "semaphore operand evaluates to a symbolic value or err",
    Category.SEM_KIND_CONFLICT: "one semaphore id used as both binary and counting",
    Category.UNDECLARED_WRITE: "assignment to a variable with no visible declaration",
    Category.ARITH_ERROR: "assigned value evaluates to err (arithmetic fault)",
    Category.BUDGET_EXCEEDED: "step budget exhausted",
}


@dataclass
class Witness:
    role: str
    line: int
    task: tuple
    node: int | None = None
    detail: str = ""

    def to_dict(self):
        return {"role": self.role, "line": self.line, "task": fmt_task(self.task),
                "node": self.node, "detail": self.detail}


def fmt_task(path) -> str:
    return ".".join(str(x) for x in path) if path is not None else "-"


@dataclass(eq=False)
class VerifError(Exception):
    category: Category
    message: str
    witnesses: list = field(default_factory=list)
    cell: str | None = None
    trace: list = field(default_factory=list)

    def __post_init__(self):
        Exception.__init__(self, f"{self.category}: {self.message}")

    def __str__(self):
        return f"{self.category}: {self.message}"

    @property
    def item(self):
        return VALIDITY_ITEM.get(self.category)

    @property
    def lines(self):
        return [w.line for w in self.witnesses]

    def to_dict(self):
        return {
            "category": str(self.category),
            "rule": RULE[self.category],
            "item": self.item,
            "message": self.message,
            "cell": self.cell,
            "witnesses": [w.to_dict() for w in self.witnesses],
            "semaphore_trace": list(self.trace),
        }

    def render(self) -> str:
        out = [f"error: {self.category}: {self.message}", f"  rule: {RULE[self.category]}"]
        if self.cell:
            out.append(f"  cell: {self.cell}")
        for w in self.witnesses:
            extra = f" ({w.detail})" if w.detail else ""
            node = f" node {w.node}" if w.node is not None else ""
            out.append(f"  {w.role}: line {w.line}, task {fmt_task(w.task)}{node}{extra}")
        return "\n".join(out)
