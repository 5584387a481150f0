"""Small-step interpreter for core programs.

Expressions are compiled once into closures ``f(task, node)`` that
evaluate under the hybrid concrete/symbolic rules and record their
reads on the current graph node.  The default scheduler runs a task
until it blocks or finishes, queueing spawned and woken tasks round
robin; :meth:`Interpreter.step` exposes single statements for the
schedule explorer.
"""
from __future__ import annotations

import os
import time
from collections import deque
from dataclasses import dataclass, field

from .errors import Category, VerifError, Witness, fmt_task
from .hbgraph import (BinarySem, CountingSem, HBGraph, NodeKind, fmt_sem,
                      graph_valid_full)
from .lang import ast as A
from .memory import Memory
from .symval import (INT_OPS, FLOAT_OPS, NEG, Err, SymNode, SymPool, concrete_binop,
                     concrete_unop, fmt_leaf, to_prefix, val_binop, val_tern, val_unop)

DEFAULT_BUDGET = 10 ** 8
BUDGET_ENV = "PIRCHECK_STEP_BUDGET"

OP_DECL, OP_ASSIGN, OP_ASYNC, OP_SEM, OP_WHILE, OP_IF = range(6)
RUNNABLE, BLOCKED, FINISHED = "runnable", "blocked", "finished"

_PLAIN = NodeKind.PLAIN
_SEM_NODE = {"set": NodeKind.SET, "wait": NodeKind.WAIT,
             "acquire": NodeKind.ACQUIRE, "release": NodeKind.RELEASE}


def default_budget() -> int:
    v = os.environ.get(BUDGET_ENV)
    return int(v) if v else DEFAULT_BUDGET


class ParanoidMismatch(AssertionError):
    """Incremental checks and the full-graph check disagree (an interpreter bug)."""


class CStmt:
    __slots__ = ("op", "src", "line", "name", "kind", "idx", "value", "body",
                 "orelse", "semop", "sem", "val", "capture")

    def __init__(self, op, src):
        self.op = op
        self.src = src
        self.line = src.line
        self.body = self.orelse = None


class Task:
    __slots__ = ("tix", "path", "frames", "cache", "status", "spawned", "blocked_on")

    def __init__(self, tix, path, body):
        self.tix = tix
        self.path = path
        self.frames = [[body, 0]] if body else []
        self.cache = {}
        self.status = RUNNABLE if body else FINISHED
        self.spawned = 0
        self.blocked_on = None

    def __repr__(self):
        return f"<task {fmt_task(self.path)} {self.status}>"


@dataclass
class Stats:
    nb_s: int = 0
    nb_conc: int = 0
    nb_sync: int = 0
    hb_nodes: int = 1
    t_int: float = 0.0
    cdag_nodes: int = 0

    @property
    def hb_rat(self) -> float:
        # retained nodes beyond the initial one, per interpreted statement
        return (self.hb_nodes - 1) / self.nb_s if self.nb_s else 0.0

    def to_dict(self, timing=True):
        d = {"nb_s": self.nb_s, "nb_conc": self.nb_conc, "nb_sync": self.nb_sync,
             "hb_nodes": self.hb_nodes, "hb_rat": round(self.hb_rat, 6),
             "cdag_nodes": self.cdag_nodes}
        if timing:
            d["t_int"] = round(self.t_int, 6)
        return d


@dataclass
class RunResult:
    program: A.CoreProgram
    memory: Memory
    graph: HBGraph
    pool: SymPool
    stats: Stats
    error: VerifError | None = None
    trace: list = field(default_factory=list)
    paranoid_items: list | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _bad(v, what):
    """Classify a non-int where a concrete int is required."""
    t = type(v)
    if t is Err:
        return v
    if t is SymNode:
        return Err("Symbolic", f"{what} is symbolic: {to_prefix(v, max_len=80)}")
    if t is int:
        return Err("ArithError", f"{what} is negative: {v}")
    return Err("ArithError", f"{what} is not an int: {v!r}")


class Interpreter:
    def __init__(self, prog: A.CoreProgram, *, merge: bool = True, paranoid: bool = False,
                 budget: int | None = None, pool: SymPool | None = None,
                 keep_accesses: bool | None = None, faults=()):
        self.prog = prog
        self.merge = merge
        self.paranoid = paranoid
        self.budget = default_budget() if budget is None else budget
        self.pool = pool if pool is not None else SymPool()
        self.memory = Memory()
        self.graph = HBGraph(keep_accesses=paranoid if keep_accesses is None else keep_accesses)
        self.kinds = prog.kinds
        self.stats = Stats()
        self.trace = []
        self.paranoid_items = None
        self.error = None
        self._t = 0.0
        self._faults = set(faults)
        # while the root is the only task ever spawned, no access can race
        # with a later one, so the race index is not maintained
        self._solo = [not self.graph.keep_accesses and not self._faults]
        self._install_faults(self._faults)
        self._later = written_after_spawn(prog.root)
        self._task_written = assigned_in_async(prog.root)
        root = self._compile_block(prog.root)
        self.tasks = [Task(0, (0,), root)]
        self.queue = deque([self.tasks[0]] if root else [])

    # -- fault injection (used to test the schedule explorer)
    def _install_faults(self, faults):
        g = self.graph
        if "no_read_check" in faults:
            def record_read(n, table, idx, line):
                rd = table.reads.setdefault(idx, {})
                rd[n.tix] = (n, line)
            g.record_read = record_read
        if "skip_wait_edge" in faults:
            real = g.add_sync_edge

            def add_sync_edge(src, dst):
                if dst.kind is not NodeKind.WAIT:
                    real(src, dst)
            g.add_sync_edge = add_sync_edge

    # -- compilation
    def _compile_block(self, stmts):
        return [self._compile_stmt(s) for s in stmts]

    def _compile_stmt(self, s):
        if isinstance(s, A.Decl):
            c = CStmt(OP_DECL, s)
            c.name, c.kind = s.name, s.kind
        elif isinstance(s, A.Assign):
            c = CStmt(OP_ASSIGN, s)
            c.name = s.name
            c.idx = self._ctarget(s.indices, s.line)
            c.value = self._cexpr(s.value, s.line)
        elif isinstance(s, A.Async):
            c = CStmt(OP_ASYNC, s)
            c.body = self._compile_block(s.body)
            later = self._later.get(id(s), ())
            c.capture = tuple((n, self.kinds.get(n, A.INT), cells)
                              for n, cells in spawn_captures(s.body).items()
                              if n in later and n not in self._task_written)
        elif isinstance(s, A.SemOp):
            c = CStmt(OP_SEM, s)
            c.semop = s.op
            if isinstance(s.sem, A.SemRef):
                c.name = s.sem.name
                c.idx = tuple(self._cexpr(i, s.line) for i in s.sem.indices)
                c.sem = None
            else:
                c.name = None
                c.sem = self._cexpr(s.sem, s.line)
            c.val = self._cexpr(s.val, s.line)
        elif isinstance(s, A.While):
            c = CStmt(OP_WHILE, s)
            c.value = self._cexpr(s.cond, s.line)
            c.body = self._compile_block(s.body)
        elif isinstance(s, A.If):
            c = CStmt(OP_IF, s)
            c.value = self._cexpr(s.cond, s.line)
            c.body = self._compile_block(s.then)
            c.orelse = self._compile_block(s.orelse)
        else:
            raise TypeError(f"not a core statement: {s!r}")
        return c

    def _ctarget(self, indices, line):
        """Compile assignment indices to ``f(task, node) -> tuple | bad value``."""
        fns = tuple(self._cexpr(i, line) for i in indices)
        if all(isinstance(i, A.Const) and type(i.value) is int and i.value >= 0 for i in indices):
            t = tuple(i.value for i in indices)
            return lambda task, node: t
        if len(fns) == 1:
            f0 = fns[0]

            def t1(task, node):
                i = f0(task, node)
                return (i,) if type(i) is int and i >= 0 else i
            return t1
        if len(fns) == 2:
            f0, f1 = fns

            def t2(task, node):
                i = f0(task, node)
                if type(i) is not int or i < 0:
                    return i
                j = f1(task, node)
                return (i, j) if type(j) is int and j >= 0 else j
            return t2

        def tn(task, node):
            out = []
            for f in fns:
                i = f(task, node)
                if type(i) is not int or i < 0:
                    return i
                out.append(i)
            return tuple(out)
        return tn

    def _cexpr(self, e, line):
        pool = self.pool
        if isinstance(e, A.Const):
            v = e.value
            return lambda task, node: v
        if isinstance(e, A.Load):
            return self._cload(e, line)
        if isinstance(e, A.Unary):
            f = self._cexpr(e.operand, line)
            op = NEG if e.op == "-" else e.op
            if isinstance(e.operand, A.Const):
                v = concrete_unop(op, e.operand.value)
                return lambda task, node: v

            def unop(task, node):
                a = f(task, node)
                if type(a) is int or type(a) is float:
                    return concrete_unop(op, a)
                return val_unop(op, a, pool, line)
            return unop
        if isinstance(e, A.Binary):
            return self._cbinary(e, line)
        if isinstance(e, A.Ternary):
            fc = self._cexpr(e.cond, line)
            ft = self._cexpr(e.then, line)
            ff = self._cexpr(e.orelse, line)

            def tern(task, node):
                c = fc(task, node)
                a = ft(task, node)
                b = ff(task, node)
                if type(c) is int and type(a) is not Err and type(b) is not Err:
                    return a if c else b
                return val_tern(c, a, b, pool, line)
            return tern
        raise TypeError(f"cannot compile {e!r}")

    def _cbinary(self, e, line):
        pool = self.pool
        op = e.op
        fa = self._cexpr(e.left, line)
        fb = self._cexpr(e.right, line)
        if isinstance(e.left, A.Const) and isinstance(e.right, A.Const):
            v = concrete_binop(op, e.left.value, e.right.value)
            if type(v) is not Err:
                return lambda task, node: v
        iop = INT_OPS[op]
        fop = FLOAT_OPS.get(op)
        if op == "+":
            def add(task, node):
                a = fa(task, node)
                b = fb(task, node)
                if type(a) is int and type(b) is int:
                    r = a + b
                    if -2147483648 <= r <= 2147483647:
                        return r
                    return iop(a, b)
                if type(a) is float and type(b) is float:
                    return a + b
                return val_binop(op, a, b, pool, line)
            return add

        def binop(task, node):
            a = fa(task, node)
            b = fb(task, node)
            if type(a) is int and type(b) is int:
                return iop(a, b)
            if type(a) is float and type(b) is float and fop is not None:
                return fop(a, b)
            return val_binop(op, a, b, pool, line)
        return binop

    def _cload(self, e, line):
        name = e.name
        kind = self.kinds.get(name, A.INT)
        leaf = self.pool.leaf
        memory = self.memory
        epochs = memory.epoch
        graph = self.graph
        fns = tuple(self._cexpr(i, line) for i in e.indices)
        const_idx = None
        if all(isinstance(i, A.Const) for i in e.indices):
            const_idx = tuple(i.value for i in e.indices)
            if not all(type(i) is int and i >= 0 for i in const_idx):
                const_idx = None

        def resolve(task):
            c = task.cache.get(name)
            ep = epochs.get(name, 0)
            if c is not None and c[0] == ep:
                return c[1]
            arr = memory.lookup(task.path, name)
            task.cache[name] = (ep, arr)
            return arr

        record_read = graph.record_read
        if graph.keep_accesses or self._faults:
            def finish(task, node, idx):
                arr = resolve(task)
                if arr is None:
                    return leaf(name, idx, kind, line)
                record_read(node, arr.acc, idx, line)
                v = arr.cells.get(idx)
                return leaf(name, idx, kind, line) if v is None else v
        else:
            solo = self._solo

            # inlined record_read; a node re-reading a cell it already read is a no-op
            def finish(task, node, idx):
                c = task.cache.get(name)
                if c is not None and c[0] == epochs.get(name, 0):
                    arr = c[1]
                else:
                    arr = resolve(task)
                if arr is None:
                    return leaf(name, idx, kind, line)
                if solo[0]:
                    v = arr.cells.get(idx)
                    return leaf(name, idx, kind, line) if v is None else v
                acc = arr.acc
                lw = acc.last_write.get(idx)
                if lw is not None:
                    w = lw[0]
                    if w.tix != node.tix and node.vc.get(w.tix, -1) < w.seq:
                        record_read(node, acc, idx, line)  # raises the race
                rd = acc.reads.get(idx)
                if rd is None:
                    acc.reads[idx] = {node.tix: (node, line)}
                else:
                    prev = rd.get(node.tix)
                    if prev is None or prev[0] is not node:
                        rd[node.tix] = (node, line)
                v = arr.cells.get(idx)
                return leaf(name, idx, kind, line) if v is None else v

        if const_idx is not None:
            if graph.keep_accesses or self._faults:
                return lambda task, node: finish(task, node, const_idx)

            def load_const(task, node):
                # hot path: scalar-like cells such as loop counters
                if solo[0]:
                    c = task.cache.get(name)
                    if c is not None and c[1] is not None and c[0] == epochs.get(name, 0):
                        v = c[1].cells.get(const_idx)
                        if v is not None:
                            return v
                return finish(task, node, const_idx)
            return load_const
        if len(fns) == 2:
            f0, f1 = fns

            def load2(task, node):
                i = f0(task, node)
                if type(i) is not int or i < 0:
                    return _index_err(i, name)
                j = f1(task, node)
                if type(j) is not int or j < 0:
                    return _index_err(j, name)
                return finish(task, node, (i, j))
            return load2
        if len(fns) == 1:
            f0 = fns[0]

            def load1(task, node):
                i = f0(task, node)
                if type(i) is not int or i < 0:
                    return _index_err(i, name)
                return finish(task, node, (i,))
            return load1

        def load(task, node):
            idx = []
            for f in fns:
                i = f(task, node)
                if type(i) is not int or i < 0:
                    return _index_err(i, name)
                idx.append(i)
            return finish(task, node, tuple(idx))
        return load

    # -- scheduling
    def runnable(self) -> list[Task]:
        return [t for t in self.tasks if t.status is RUNNABLE]

    def run(self) -> RunResult:
        t0 = time.perf_counter()
        try:
            queue = self.queue
            exec_one = self._exec
            while queue:
                task = queue.popleft()
                while task.status is RUNNABLE:
                    exec_one(task)
            self.finalize()
        except VerifError as err:
            self.error = err
        self._t += time.perf_counter() - t0
        return self.result()

    def step(self, task: Task):
        """Execute exactly one statement of a runnable task."""
        if task.status is not RUNNABLE:
            raise ValueError(f"task {fmt_task(task.path)} is not runnable")
        t0 = time.perf_counter()
        try:
            self._exec(task)
        finally:
            self._t += time.perf_counter() - t0

    def finalize(self):
        """Called when nothing is runnable: report deadlock or finish."""
        blocked = [t for t in self.tasks if t.status is BLOCKED]
        if blocked:
            blocked.sort(key=lambda t: t.path)
            ws = []
            sems = []
            for t in blocked:
                n = t.blocked_on
                ws.append(Witness(f"blocked {n.kind.name.lower()}", n.line, t.path, n.id,
                                  f"{n.kind.name.lower()}({fmt_sem(n.sem)}, {n.val})"))
                if fmt_sem(n.sem) not in sems:
                    sems.append(fmt_sem(n.sem))
            first = blocked[0].blocked_on
            msg = (f"{len(blocked)} task(s) blocked forever; first: task {fmt_task(blocked[0].path)} "
                   f"at {first.kind.name.lower()}({fmt_sem(first.sem)}, {first.val}) on line {first.line}; "
                   f"semaphores: {', '.join(sems)}")
            raise VerifError(Category.DEADLOCK, msg, ws, cell=f"semaphore {sems[0]}",
                             trace=self.trace[-20:])

    def result(self) -> RunResult:
        st = self.stats
        st.hb_nodes = len(self.graph.nodes)
        st.cdag_nodes = len(self.pool)
        st.t_int = self._t
        if self.error is not None and self.paranoid and self.paranoid_items is None:
            self._paranoid_on_error(self.error)
        return RunResult(self.prog, self.memory, self.graph, self.pool, st, self.error,
                         self.trace, self.paranoid_items)

    # -- paranoid cross-check
    def _paranoid_after_step(self):
        found = graph_valid_full(self.graph)
        if found:
            raise ParanoidMismatch(f"full-graph check found item {found[0].item} "
                                   f"({found[0].message}) but incremental checks passed")

    def _paranoid_on_error(self, err):
        found = graph_valid_full(self.graph)
        self.paranoid_items = sorted({v.item for v in found})
        if err.item is not None and err.item not in self.paranoid_items:
            raise ParanoidMismatch(f"incremental check reported item {err.item} but the full-graph "
                                   f"check found {self.paranoid_items}")
        if err.item is None and found:
            raise ParanoidMismatch(f"{err.category} reported but the graph also violates items "
                                   f"{self.paranoid_items}")

    # -- execution
    def _fail(self, cat, msg, task, node, line, cell=None):
        raise VerifError(Category(cat), msg,
                         [Witness("statement", line, task.path, node.id if node else None)],
                         cell=cell, trace=self.trace[-20:])

    def _err_value(self, v: Err, task, node, line, what):
        cat = v.category
        if cat == "Symbolic":
            cat = {"index": Category.SYMBOLIC_INDEX, "condition": Category.SYMBOLIC_CONTROL_FLOW,
                   "semaphore": Category.SYMBOLIC_SEM_ARG}[what]
        self._fail(cat, f"{what} on line {line}: {v.detail}", task, node, line)

    def _exec(self, task: Task):
        st = self.stats
        if st.nb_s >= self.budget:
            raise VerifError(Category.BUDGET_EXCEEDED,
                             f"step budget of {self.budget} statements exhausted",
                             [Witness("task", 0, task.path)])
        frames = task.frames
        fr = frames[-1]
        s = fr[0][fr[1]]
        op = s.op
        g = self.graph
        tix = task.tix
        if op is OP_ASSIGN:
            tail = g.tails[tix]
            if self.merge and tail is not None and tail.kind is _PLAIN and tail.tix == tix:
                # macro-node fast path, same as stmt_node
                tail.merged_count += 1
                g.instances[tix] += 1
                node = tail
            else:
                node = g.stmt_node(tix, _PLAIN, s.line, self.merge)
            idx = s.idx(task, node)
            if type(idx) is not tuple:
                self._err_value(_bad(idx, f"index of {s.name}"), task, node, s.line, "index")
            v = s.value(task, node)
            if type(v) is Err:
                if v.category == "Symbolic":
                    v = Err(Category.SYMBOLIC_INDEX.value, v.detail)
                self._fail(v.category, f"value assigned to {fmt_leaf(s.name, idx)} on line {s.line} "
                                       f"is err: {v.detail}", task, node, s.line)
            c = task.cache.get(s.name)
            if c is not None and c[0] == self.memory.epoch.get(s.name, 0):
                arr = c[1]
            else:
                arr = self._resolve(task, s.name)
            if arr is None:
                self._fail(Category.UNDECLARED_WRITE, f"{s.name} is not declared in task "
                                                      f"{fmt_task(task.path)} or its ancestors",
                           task, node, s.line, s.name)
            if not self._solo[0]:
                g.record_write(node, arr.acc, idx, s.line)
            arr.cells[idx] = v
            fr[1] += 1
            st.nb_s += 1
            if fr[1] < len(fr[0]) and not self.paranoid:
                return
            self._pop_done(task)
            if self.paranoid:
                self._paranoid_after_step()
            return
        elif op is OP_WHILE or op is OP_IF:
            node = g.stmt_node(tix, _PLAIN, s.line, self.merge)
            c = s.value(task, node)
            tc = type(c)
            if tc is not int and tc is not float:
                self._err_value(_bad(c, "condition") if tc is not Err else c, task, node, s.line, "condition")
            if op is OP_WHILE:
                if c:
                    frames.append([s.body, 0])
                else:
                    fr[1] += 1
            else:
                fr[1] += 1
                body = s.body if c else s.orelse
                if body:
                    frames.append([body, 0])
        elif op is OP_DECL:
            g.stmt_node(tix, _PLAIN, s.line, self.merge)
            arr = self.memory.mem_decl(task.path, s.name, s.kind)
            if arr.acc is None:
                arr.acc = g.table(arr.key)
            fr[1] += 1
        elif op is OP_ASYNC:
            node = g.stmt_node(tix, NodeKind.ASYNC, s.line, self.merge)
            self._solo[0] = False
            task.spawned += 1
            path = task.path + (task.spawned,)
            ctix = g.add_task(path, node)
            if s.capture:
                self._capture(task, node, path, s)
            child = Task(ctix, path, s.body)
            self.tasks.append(child)
            st.nb_conc += 1
            fr[1] += 1
            if child.status is RUNNABLE:
                self.queue.append(child)
            else:
                g.end_task(ctix, s.line)
        else:
            fr[1] += 1
            if not self._exec_sem(task, s):
                self._pop_done(task)
                if self.paranoid:
                    self._paranoid_after_step()
                return
        st.nb_s += 1
        self._pop_done(task)
        if self.paranoid:
            self._paranoid_after_step()

    def _pop_done(self, task):
        frames = task.frames
        while frames:
            fr = frames[-1]
            if fr[1] < len(fr[0]):
                return
            frames.pop()
        if task.status is RUNNABLE:
            self._finish(task)

    def _finish(self, task):
        task.status = FINISHED
        if task.tix != 0:
            self.graph.end_task(task.tix)
            self.memory.finish_task(task.path)

    def _capture(self, task, node, path, s):
        # the parent reads the captured cells on the async node; the child
        # gets a private copy so later parent writes cannot race with it
        g = self.graph
        for name, kind, cells in s.capture:
            src = self._resolve(task, name)
            if src is None:
                continue
            arr = self.memory.mem_decl(path, name, kind)
            arr.captured = True
            arr.acc = g.table(arr.key)
            for idx in cells:
                g.record_read(node, src.acc, idx, s.line)
                v = src.cells.get(idx)
                if v is not None:
                    arr.cells[idx] = v

    def _resolve(self, task, name):
        c = task.cache.get(name)
        ep = self.memory.epoch.get(name, 0)
        if c is not None and c[0] == ep:
            return c[1]
        arr = self.memory.lookup(task.path, name)
        task.cache[name] = (ep, arr)
        return arr

    def _exec_sem(self, task, s) -> bool:
        """Run a semaphore statement; False if the task blocked on it."""
        g = self.graph
        node = g.stmt_node(task.tix, _SEM_NODE[s.semop], s.line, self.merge)
        if s.sem is None:
            idx = []
            for f in s.idx:
                i = f(task, node)
                if type(i) is not int or i < 0:
                    self._err_value(_bad(i, f"semaphore index of {s.name}"), task, node, s.line, "semaphore")
                idx.append(i)
            sid = (s.name, tuple(idx))
        else:
            sid = s.sem(task, node)
            if type(sid) is not int:
                self._err_value(_bad(sid, "semaphore id"), task, node, s.line, "semaphore")
        val = s.val(task, node)
        if type(val) is not int:
            self._err_value(_bad(val, "semaphore value"), task, node, s.line, "semaphore")
        if val < 0 and s.semop in ("acquire", "release"):
            self._fail(Category.ARITH_ERROR, f"{s.semop} value {val} is negative on line {s.line}",
                       task, node, s.line)
        node.sem = sid
        node.val = val
        counting = s.semop in ("acquire", "release")
        led = g.sems.get(sid)
        if led is None:
            led = g.sems[sid] = CountingSem(sid) if counting else BinarySem(sid)
        elif (led.kind == "counting") != counting:
            self._fail(Category.SEM_KIND_CONFLICT,
                       f"semaphore {fmt_sem(sid)} used as {led.kind} and then with {s.semop} on line {s.line}",
                       task, node, s.line, f"semaphore {fmt_sem(sid)}")
        ev = {"step": self.stats.nb_s, "op": s.semop, "sem": fmt_sem(sid), "val": val,
              "task": fmt_task(task.path), "line": s.line, "node": node.id}
        self.trace.append(ev)
        try:
            if s.semop == "set":
                woken = led.on_set(g, node)
            elif s.semop == "release":
                woken = led.on_release(g, node)
            elif s.semop == "wait":
                woken = None
                done = led.on_wait(g, node)
            else:
                woken = None
                done = led.on_acquire(g, node)
        except VerifError as err:
            err.trace = self.trace[-20:]
            raise
        if woken is None:
            if not done:
                ev["status"] = "blocked"
                task.status = BLOCKED
                task.blocked_on = node
                return False
            ev["status"] = "matched"
            ev["from"] = [n.id for n in node.match_src]
        else:
            ev["status"] = "done"
            for w in woken:
                self._wake(w)
        self.stats.nb_sync += 1
        return True

    def _wake(self, n):
        for t in self.tasks:
            if t.status is BLOCKED and t.blocked_on is n:
                t.status = RUNNABLE
                t.blocked_on = None
                self.stats.nb_s += 1
                self.stats.nb_sync += 1
                self.trace.append({"step": self.stats.nb_s, "op": n.kind.name.lower(), "sem": fmt_sem(n.sem),
                                   "val": n.val, "task": fmt_task(t.path), "line": n.line, "node": n.id,
                                   "status": "woken", "from": [m.id for m in n.match_src]})
                self.queue.append(t)
                self._pop_done(t)
                return


def _assigned_in_task(stmts) -> set:
    out = set()
    stack = list(stmts)
    while stack:
        st = stack.pop()
        if isinstance(st, A.Assign):
            out.add(st.name)
        elif isinstance(st, A.While):
            stack.extend(st.body)
        elif isinstance(st, A.If):
            stack.extend(st.then)
            stack.extend(st.orelse)
    return out


def written_after_spawn(root) -> dict:
    """id(async stmt) -> names its spawning task may assign after the spawn.

    That is every assignment later in the enclosing statement lists and,
    for an async inside a loop, the whole loop body.
    """
    out = {}

    def visit(stmts, later):
        for k, st in enumerate(stmts):
            after = later | _assigned_in_task(stmts[k + 1:])
            if isinstance(st, A.Async):
                out[id(st)] = after
                visit(st.body, frozenset())
            elif isinstance(st, A.While):
                visit(st.body, after | _assigned_in_task(st.body))
            elif isinstance(st, A.If):
                visit(st.then, after)
                visit(st.orelse, after)

    visit(root, frozenset())
    return out


def assigned_in_async(root) -> set:
    """Names assigned anywhere inside an async body.

    Such data is produced by tasks and handed over through semaphores,
    so reads of it are never captured at spawn.
    """
    out = set()
    for st in A.walk_stmts(root):
        if isinstance(st, A.Async):
            out |= {x.name for x in A.walk_stmts(st.body) if isinstance(x, A.Assign)}
    return out


def spawn_captures(body) -> dict:
    """Cells an async body may read by value at spawn time.

    A name qualifies when the body (nested tasks included) never assigns
    or declares it, never uses it as a semaphore array, and only loads it
    at constant indices.  The interpreter further restricts capture to
    names the parent writes after the spawn (:func:`written_after_spawn`)
    and no task ever writes (:func:`assigned_in_async`).
    Maps name -> sorted tuple of index tuples.
    """
    cells: dict[str, set] = {}
    banned = set()
    for st in A.walk_stmts(body):
        if isinstance(st, A.Assign):
            banned.add(st.name)
        elif isinstance(st, A.Decl):
            banned.add(st.name)
        elif isinstance(st, A.SemOp) and isinstance(st.sem, A.SemRef):
            banned.add(st.sem.name)
        for e in A.stmt_exprs(st):
            for x in A.walk_expr(e):
                if not isinstance(x, A.Load):
                    continue
                idx = tuple(i.value if isinstance(i, A.Const) else None for i in x.indices)
                if any(type(i) is not int or i < 0 for i in idx):
                    banned.add(x.name)
                else:
                    cells.setdefault(x.name, set()).add(idx)
    return {n: tuple(sorted(c)) for n, c in sorted(cells.items()) if n not in banned}


def _index_err(i, name):
    t = type(i)
    if t is Err:
        return i
    if t is SymNode:
        return Err("SymbolicIndex", f"symbolic index into {name}: {to_prefix(i, max_len=80)}")
    if t is int:
        return Err("ArithError", f"negative index {i} into {name}")
    return Err("ArithError", f"non-integer index {i!r} into {name}")


def run_program(prog: A.CoreProgram, **kw) -> RunResult:
    return Interpreter(prog, **kw).run()
