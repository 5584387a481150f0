"""Happens-before graph over statement instances.

Every task is a chain of nodes, so reachability has an exact compact
form: each node keeps ``vc``, a map from task index to the largest
chain position of that task among its ancestors (itself included).
``n`` happens before ``m`` iff ``m.vc[n.tix] >= n.seq``.  Edges are
only ever added to nodes without successors (new nodes, or blocked
wait/acquire nodes being matched), which keeps the summaries exact.
A plain DFS over the edge list is kept as an oracle.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import Category, VerifError, Witness, fmt_task
from .symval import fmt_leaf


class NodeKind(IntEnum):
    PLAIN = 0
    ASYNC = 1
    SET = 2
    WAIT = 3
    ACQUIRE = 4
    RELEASE = 5
    TASKEND = 6


PLAIN = NodeKind.PLAIN
SEM_KINDS = (NodeKind.SET, NodeKind.WAIT, NodeKind.ACQUIRE, NodeKind.RELEASE)


def fmt_sem(sid) -> str:
    if type(sid) is tuple:
        return fmt_leaf(sid[0], sid[1])
    return str(sid)


def fmt_cell(key, idx) -> str:
    task, name = key
    return f"{fmt_leaf(name, idx)} (declared in task {fmt_task(task)})"


class HBNode:
    __slots__ = ("id", "tix", "task", "seq", "kind", "vc", "succ", "pred", "line",
                 "sem", "val", "accesses", "merged_count", "first_instance",
                 "match_src", "pending")

    def __init__(self, nid, tix, task, seq, kind, vc, pred, line):
        self.id = nid
        self.tix = tix
        self.task = task
        self.seq = seq
        self.kind = kind
        self.vc = vc
        self.succ = []
        self.pred = pred
        self.line = line
        self.sem = None
        self.val = None
        self.accesses = None
        self.merged_count = 1
        self.first_instance = 0
        self.match_src = None
        self.pending = False

    def __repr__(self):
        sem = f" {fmt_sem(self.sem)},{self.val}" if self.sem is not None else ""
        return f"<n{self.id} {self.kind.name} task {fmt_task(self.task)} line {self.line}{sem}>"


class AccessTable:
    """Per-variable race index: last write and reads since, per index."""

    __slots__ = ("key", "last_write", "reads")

    def __init__(self, key):
        self.key = key
        self.last_write = {}
        self.reads = {}


class HBGraph:
    def __init__(self, keep_accesses: bool = False):
        self.nodes: list[HBNode] = []
        self.edges: list[tuple[int, int, str]] = []
        self.tasks: list[tuple] = []
        self.tails: list[HBNode | None] = []
        self.seqs: list[int] = []
        self.instances: list[int] = []
        self.keep_accesses = keep_accesses
        self.tables: dict[tuple, AccessTable] = {}
        self.sems: dict = {}
        self.add_task((0,), None)
        root = self._new_node(0, PLAIN, 0)
        root.merged_count = 0

    # -- construction
    def add_task(self, path: tuple, spawn_node: HBNode | None) -> int:
        self.tasks.append(path)
        self.tails.append(spawn_node)
        self.seqs.append(0)
        self.instances.append(0)
        return len(self.tasks) - 1

    def _new_node(self, tix, kind, line) -> HBNode:
        pred = self.tails[tix]
        seq = self.seqs[tix]
        self.seqs[tix] = seq + 1
        vc = dict(pred.vc) if pred is not None else {}
        vc[tix] = seq
        n = HBNode(len(self.nodes), tix, self.tasks[tix], seq, kind, vc, pred, line)
        if self.keep_accesses:
            n.accesses = []
        n.first_instance = self.instances[tix]
        self.nodes.append(n)
        if pred is not None:
            pred.succ.append(n)
            self.edges.append((pred.id, n.id, "seq" if pred.tix == tix else "spawn"))
        self.tails[tix] = n
        return n

    def stmt_node(self, tix: int, kind: NodeKind, line: int, merge: bool = True) -> HBNode:
        """Node for the next statement instance of a task.

        Plain statements fold into the task's tail when that tail is a
        plain node of the same task (macro-node); anything else gets a
        fresh node.
        """
        tail = self.tails[tix]
        if merge and kind is PLAIN and tail is not None and tail.kind is PLAIN and tail.tix == tix:
            tail.merged_count += 1
            self.instances[tix] += 1
            return tail
        n = self._new_node(tix, kind, line)
        self.instances[tix] += 1
        return n

    merge_macro = stmt_node

    def end_task(self, tix: int, line: int = 0) -> HBNode:
        n = self._new_node(tix, NodeKind.TASKEND, line)
        n.merged_count = 0
        return n

    def add_sync_edge(self, src: HBNode, dst: HBNode):
        assert not dst.succ, "sync edge into a node that already has successors"
        self.edges.append((src.id, dst.id, "sync"))
        src.succ.append(dst)
        vc = dst.vc
        for t, s in src.vc.items():
            if vc.get(t, -1) < s:
                vc[t] = s

    # -- queries
    @staticmethod
    def happens_before(n: HBNode, m: HBNode) -> bool:
        return n is not m and m.vc.get(n.tix, -1) >= n.seq

    def may_happen_in_parallel(self, n: HBNode, m: HBNode) -> bool:
        return not self.happens_before(n, m) and not self.happens_before(m, n)

    @staticmethod
    def task_leaf(n: HBNode) -> bool:
        return all(m.tix != n.tix for m in n.succ)

    def corr_set(self, w: HBNode, s: HBNode) -> bool:
        """Literal 'most recent set' correspondence of a wait and a set."""
        hb = self.happens_before
        if s.sem != w.sem or s.val != w.val:
            return False
        if hb(w, s):
            return False
        for s2 in self.nodes:
            if s2.kind is NodeKind.SET and s2 is not s and s2.sem == w.sem:
                if hb(s, s2) and not hb(w, s2):
                    return False
        return True

    def corr_rel(self, a: HBNode, r: HBNode) -> bool:
        hb = self.happens_before
        if a.sem != r.sem or hb(a, r):
            return False
        for a2 in self.nodes:
            if a2.kind is NodeKind.ACQUIRE and a2 is not a and a2.sem == a.sem:
                if hb(r, a2) and hb(a2, a):
                    return False
        return True

    def reachable_dfs(self, n: HBNode, m: HBNode, skip_edge=None) -> bool:
        """Oracle: path existence by plain search over the edge list."""
        if n is m:
            return False
        adj = {}
        for e in self.edges:
            if e == skip_edge:
                continue
            adj.setdefault(e[0], []).append(e[1])
        seen = {n.id}
        stack = [n.id]
        while stack:
            x = stack.pop()
            for y in adj.get(x, ()):
                if y == m.id:
                    return True
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return False

    def task_index(self, path: tuple) -> int:
        return self.tasks.index(path)

    # -- race index
    def table(self, key) -> AccessTable:
        t = self.tables.get(key)
        if t is None:
            t = self.tables[key] = AccessTable(key)
        return t

    def record_access(self, n: HBNode, table: AccessTable, idx: tuple, is_write: bool, line: int):
        if is_write:
            self.record_write(n, table, idx, line)
        else:
            self.record_read(n, table, idx, line)

    def record_read(self, n, table, idx, line):
        if n.accesses is not None:
            n.accesses.append((table.key, idx, False, line))
        lw = table.last_write.get(idx)
        if lw is not None:
            w = lw[0]
            if n.vc.get(w.tix, -1) < w.seq:
                raise self._race(table, idx, lw, (n, line), "write", "read")
        rd = table.reads.get(idx)
        if rd is None:
            table.reads[idx] = {n.tix: (n, line)}
        else:
            rd[n.tix] = (n, line)

    def record_write(self, n, table, idx, line):
        if n.accesses is not None:
            n.accesses.append((table.key, idx, True, line))
        lw = table.last_write.get(idx)
        vc = n.vc
        if lw is not None:
            w = lw[0]
            if vc.get(w.tix, -1) < w.seq:
                raise self._race(table, idx, lw, (n, line), "write", "write")
        rd = table.reads.pop(idx, None)
        if rd:
            for tix, prior in rd.items():
                if vc.get(tix, -1) < prior[0].seq:
                    raise self._race(table, idx, prior, (n, line), "read", "write")
        table.last_write[idx] = (n, line)

    def _race(self, table, idx, prior, cur, k1, k2):
        (m, l1), (n, l2) = prior, cur
        cell = fmt_leaf(table.key[1], idx)
        return VerifError(
            Category.RACE,
            f"{k1} of {cell} on line {l1} (task {fmt_task(m.task)}) may happen in parallel "
            f"with {k2} on line {l2} (task {fmt_task(n.task)})",
            [Witness(f"first {k1}", l1, m.task, m.id), Witness(f"second {k2}", l2, n.task, n.id)],
            cell=cell,
        )

    # -- output
    def to_dot(self, max_nodes: int = 2000) -> str:
        out = ["digraph hb {", "  node [shape=box, fontname=monospace];"]
        shown = set()
        for n in self.nodes[:max_nodes]:
            label = f"n{n.id} {n.kind.name}\\ntask {fmt_task(n.task)} line {n.line}"
            if n.sem is not None:
                label += f"\\n{fmt_sem(n.sem)}, {n.val}"
            if n.merged_count > 1:
                label += f"\\nx{n.merged_count}"
            style = ', style=filled, fillcolor="#ffdddd"' if n.pending else ""
            out.append(f'  n{n.id} [label="{label}"{style}];')
            shown.add(n.id)
        for a, b, kind in self.edges:
            if a in shown and b in shown:
                attr = ' [color=blue, penwidth=2]' if kind == "sync" else (' [style=dashed]' if kind == "spawn" else "")
                out.append(f"  n{a} -> n{b}{attr};")
        out.append("}")
        return "\n".join(out) + "\n"


# -- semaphore ledgers -----------------------------------------------------------

def _sem_err(cat, msg, roles_nodes, sid):
    ws = [Witness(role, n.line, n.task, n.id, f"{n.kind.name.lower()}({fmt_sem(n.sem)}, {n.val})")
          for role, n in roles_nodes]
    return VerifError(cat, msg, ws, cell=f"semaphore {fmt_sem(sid)}")


class BinarySem:
    """Set/wait ledger for one semaphore id.

    A wait ``w`` with value v is resolved against the sets on the same
    id that are not after it.  Let P be the sets unordered with w and
    CA the maximal ancestor sets of w with value v.  Then |P| >= 2, or
    P nonempty together with CA nonempty, or |CA| >= 2 is a DoubleSet;
    otherwise w matches the single candidate (the set in P when P is
    nonempty) or blocks.  A set arriving unordered with an already
    matched wait is a DoubleSet too.  This makes the outcome the same
    for every schedule.
    """

    kind = "binary"

    def __init__(self, sid):
        self.sid = sid
        self.sets = {}            # tix -> ([seq], [node])
        self.pending = []         # blocked waits
        self.matched_latest = {}  # tix -> latest matched wait of that task

    def resolve(self, g: HBGraph, w: HBNode):
        lim_vc = w.pred.vc if w.pred is not None else {}
        own = (w.tix, w.seq)
        par = []
        cands = []
        for tix, (seqs, nodes) in self.sets.items():
            lim = lim_vc.get(tix, -1)
            if tix == own[0]:
                lim = max(lim, own[1] - 1)
            k = bisect_right(seqs, lim)
            par.extend(nodes[k:k + 2])
            if k:
                cands.append(nodes[k - 1])
        hb = g.happens_before
        if len(par) >= 2:
            raise _sem_err(Category.DOUBLE_SET,
                           f"wait({fmt_sem(self.sid)}, {w.val}) has two sets that may happen in parallel with it",
                           [("wait", w), ("set", par[0]), ("set", par[1])], self.sid)
        maxima = [c for c in cands if not any(d is not c and hb(c, d) for d in cands)]
        ca = [m for m in maxima if m.val == w.val]
        if par:
            if ca:
                raise _sem_err(Category.DOUBLE_SET,
                               f"wait({fmt_sem(self.sid)}, {w.val}) may correspond to an earlier set or to a parallel one",
                               [("wait", w), ("set", ca[0]), ("set", par[0])], self.sid)
            return par[0] if par[0].val == w.val else None
        if len(ca) >= 2:
            raise _sem_err(Category.DOUBLE_SET,
                           f"wait({fmt_sem(self.sid)}, {w.val}) has two most recent sets",
                           [("wait", w), ("set", ca[0]), ("set", ca[1])], self.sid)
        return ca[0] if ca else None

    def _match(self, g, w, s):
        g.add_sync_edge(s, w)
        w.match_src = [s]
        w.pending = False
        self.matched_latest[w.tix] = w

    def on_wait(self, g, w) -> bool:
        s = self.resolve(g, w)
        if s is None:
            w.pending = True
            self.pending.append(w)
            return False
        self._match(g, w, s)
        return True

    def on_set(self, g, s) -> list:
        """Record a set; return the waits it unblocked."""
        hb = g.happens_before
        for w in self.matched_latest.values():
            if not hb(w, s):
                raise _sem_err(Category.DOUBLE_SET,
                               f"set on line {s.line} may happen in parallel with a wait that already matched",
                               [("wait", w), ("matched set", w.match_src[0]), ("set", s)], self.sid)
        seqs, nodes = self.sets.setdefault(s.tix, ([], []))
        seqs.append(s.seq)
        nodes.append(s)
        woken = []
        for w in list(self.pending):
            m = self.resolve(g, w)
            if m is not None:
                self.pending.remove(w)
                self._match(g, w, m)
                woken.append(w)
        return woken


@dataclass
class _ZeroRelease:
    node: HBNode
    acquires: list = field(default_factory=list)
    closed: bool = False


class CountingSem:
    """Release/acquire ledger for one semaphore id (set-total matching)."""

    kind = "counting"

    def __init__(self, sid):
        self.sid = sid
        self.chain = []      # matched acquires, totally ordered
        self.pending = None  # blocked acquire
        self.pool = []       # unconsumed positive releases
        self.zeros = []      # zero-valued releases still able to correspond

    def _unordered_matched(self, g, r):
        out = []
        for a in reversed(self.chain):
            if g.happens_before(a, r):
                break
            out.append(a)
        return out

    def _try(self, g, a) -> bool:
        total = sum(r.val for r in self.pool)
        if total > a.val:
            raise _sem_err(Category.OVER_RELEASE,
                           f"releases summing to {total} correspond to acquire({fmt_sem(self.sid)}, {a.val})",
                           [("acquire", a)] + [("release", r) for r in self.pool], self.sid)
        if total < a.val:
            return False
        for r in self.pool:
            g.add_sync_edge(r, a)
        a.match_src = list(self.pool)
        a.pending = False
        self.pool = []
        self.chain.append(a)
        return True

    def on_acquire(self, g, a) -> bool:
        hb = g.happens_before
        other = self.pending
        if other is None and self.chain and not hb(self.chain[-1], a):
            other = self.chain[-1]
        if other is not None:
            raise _sem_err(Category.PARALLEL_ACQUIRES,
                           f"two acquires on {fmt_sem(self.sid)} may happen in parallel",
                           [("acquire", other), ("acquire", a)], self.sid)
        for z in self.zeros:
            if z.closed:
                continue
            z.acquires.append(a)
            if hb(z.node, a):
                z.closed = True
            if len(z.acquires) >= 2:
                raise _sem_err(Category.DOUBLE_ACQUIRE_MATCH,
                               f"release({fmt_sem(self.sid)}, 0) on line {z.node.line} corresponds to two acquires",
                               [("release", z.node)] + [("acquire", x) for x in z.acquires[:2]], self.sid)
        self.zeros = [z for z in self.zeros if not z.closed]
        if self._try(g, a):
            return True
        a.pending = True
        self.pending = a
        return False

    def on_release(self, g, r) -> list:
        unordered = self._unordered_matched(g, r)
        if r.val == 0:
            accs = list(reversed(unordered))
            if self.pending is not None:
                accs.append(self.pending)
            if len(accs) >= 2:
                raise _sem_err(Category.DOUBLE_ACQUIRE_MATCH,
                               f"release({fmt_sem(self.sid)}, 0) corresponds to two acquires",
                               [("release", r)] + [("acquire", x) for x in accs[:2]], self.sid)
            self.zeros.append(_ZeroRelease(r, accs))
            return []
        if unordered:
            a = unordered[-1]
            raise _sem_err(Category.OVER_RELEASE,
                           f"release({fmt_sem(self.sid)}, {r.val}) may happen in parallel with an acquire that "
                           f"already received its full value {a.val}",
                           [("acquire", a), ("release", r)] + [("consumed release", x) for x in a.match_src],
                           self.sid)
        self.pool.append(r)
        a = self.pending
        if a is not None and self._try(g, a):
            self.pending = None
            return [a]
        return []


# -- declarative validity ---------------------------------------------------------

@dataclass
class Violation:
    item: int
    message: str
    nodes: list

    @property
    def lines(self):
        return [n.line for n in self.nodes]


class _VCReach:
    def __init__(self, g):
        self.hb = g.happens_before

    def anc_wo_match(self, s, w):
        p = w.pred
        return p is not None and (s is p or self.hb(s, p))


class _DFSReach:
    def __init__(self, g):
        self.g = g
        self.cache = {}
        self.adj = {}
        for a, b, _ in g.edges:
            self.adj.setdefault(a, []).append(b)

    def _desc(self, n):
        d = self.cache.get(n.id)
        if d is None:
            d = set()
            stack = [n.id]
            while stack:
                x = stack.pop()
                for y in self.adj.get(x, ()):
                    if y not in d:
                        d.add(y)
                        stack.append(y)
            self.cache[n.id] = d
        return d

    def hb(self, a, b):
        return a is not b and b.id in self._desc(a)

    def anc_wo_match(self, s, w):
        p = w.pred
        return p is not None and (s is p or self.hb(s, p))


def graph_valid_full(g: HBGraph, oracle: bool = False) -> list[Violation]:
    """Check the five validity conditions over the whole graph.

    Returns every violation found (empty list means valid).  Item 1
    needs per-node access lists, i.e. a graph built with
    ``keep_accesses=True``.  With ``oracle=True`` reachability comes
    from a DFS over the edge list instead of the chain summaries.
    """
    reach = _DFSReach(g) if oracle else _VCReach(g)
    hb = reach.hb

    def mhp(a, b):
        return not hb(a, b) and not hb(b, a)

    out = []
    # item 1
    if g.keep_accesses:
        by_cell = {}
        for n in g.nodes:
            for key, idx, is_write, line in n.accesses or ():
                by_cell.setdefault((key, idx), []).append((n, is_write, line))
        for (key, idx), accs in by_cell.items():
            # collapse to one entry per (node, kind)
            seen = {}
            for n, w, line in accs:
                seen.setdefault((n.id, w), (n, w, line))
            accs = list(seen.values())
            found = False
            for i in range(len(accs)):
                for j in range(i + 1, len(accs)):
                    a, b = accs[i], accs[j]
                    if (a[1] or b[1]) and a[0] is not b[0] and a[0].tix != b[0].tix and mhp(a[0], b[0]):
                        out.append(Violation(1, f"conflicting accesses to {fmt_leaf(key[1], idx)} "
                                                f"on lines {a[2]} and {b[2]} may happen in parallel",
                                             [a[0], b[0]]))
                        found = True
                        break
                if found:
                    break

    by_sem = {}
    for n in g.nodes:
        if n.kind in SEM_KINDS:
            by_sem.setdefault(n.sem, {}).setdefault(n.kind, []).append(n)

    for sid, groups in by_sem.items():
        sets = groups.get(NodeKind.SET, [])
        # item 2
        for w in groups.get(NodeKind.WAIT, []):
            anc = [s for s in sets if reach.anc_wo_match(s, w)]
            par = [s for s in sets if not reach.anc_wo_match(s, w) and not hb(w, s)]
            maxima = [c for c in anc if not any(d is not c and hb(c, d) for d in anc)]
            ca = [m for m in maxima if m.val == w.val]
            if len(par) >= 2 or (par and ca) or len(ca) >= 2:
                out.append(Violation(2, f"wait({fmt_sem(sid)}, {w.val}) on line {w.line} has an ambiguous set",
                                     [w] + (par + ca)[:2]))
                continue
            expect = (par[0] if par[0].val == w.val else None) if par else (ca[0] if ca else None)
            got = w.match_src[0] if w.match_src else None
            if got is not None and got is not expect:
                out.append(Violation(2, f"wait on line {w.line} matched a set that does not correspond to it",
                                     [w, got]))
        acqs = groups.get(NodeKind.ACQUIRE, [])
        rels = groups.get(NodeKind.RELEASE, [])

        def corr(a, r):
            if hb(a, r):
                return False
            return not any(a2 is not a and hb(r, a2) and hb(a2, a) for a2 in acqs)

        # item 3
        for r in rels:
            cs = [a for a in acqs if corr(a, r)]
            if len(cs) >= 2:
                out.append(Violation(3, f"release({fmt_sem(sid)}, {r.val}) on line {r.line} corresponds to "
                                        f"{len(cs)} acquires", [r] + cs[:2]))
        # item 4
        for i in range(len(acqs)):
            for j in range(i + 1, len(acqs)):
                if mhp(acqs[i], acqs[j]):
                    out.append(Violation(4, f"acquires on {fmt_sem(sid)} on lines {acqs[i].line} and "
                                            f"{acqs[j].line} may happen in parallel", [acqs[i], acqs[j]]))
        # item 5
        for a in acqs:
            rs = [r for r in rels if corr(a, r)]
            total = sum(r.val for r in rs)
            if total > a.val:
                out.append(Violation(5, f"releases summing to {total} correspond to acquire({fmt_sem(sid)}, "
                                        f"{a.val}) on line {a.line}", [a] + rs))
    return out
