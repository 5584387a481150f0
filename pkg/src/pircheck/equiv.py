"""Equivalence of final memories, with optional CDAG normalization.

Two runs are compared cell by cell over a comparison set of variables.
Symbolic values are compared by identity inside one :class:`SymPool`, so
both memories must live in (or be imported into) the same pool.  The
normalizer flattens and sorts associative-commutative operators and
applies rewrite rules bottom-up to a fixpoint.
"""
from __future__ import annotations

import re
import time
from collections import deque
from dataclasses import dataclass, field

from .lang import ast as A
from .memory import ROOT
from .symval import (AC_OPS, CONST, LEAF, Err, SymNode, SymPool, fmt_leaf,
                     postorder, to_prefix, values_equal)

INTERNAL_PREFIX = "__"
NONLOCAL, STRICT = "non-local", "strict-all"
DEFAULT_REWRITE_BUDGET = 10 ** 6

# operator ranks for the AC sort; anything unknown sorts after these
_OP_ORDER = ("+", "-", "*", "/", "%", "min", "max", "neg", "~", "!", "<<", ">>", "&", "|",
             "^", "<", "<=", ">", ">=", "==", "!=", "&&", "||", "?:")
_OP_RANK = {op: i for i, op in enumerate(_OP_ORDER)}


class RuleError(ValueError):
    """A rewrite rule is malformed or breaks the AC pattern restriction."""


class RewriteBudgetExceeded(RuntimeError):
    pass


# -- rules ---------------------------------------------------------------------

@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PConst:
    value: int | float


@dataclass(frozen=True)
class PLeaf:
    name: str
    idx: tuple


@dataclass(frozen=True)
class POp:
    op: str
    args: tuple


@dataclass(frozen=True)
class Rule:
    pattern: POp
    replacement: object
    text: str
    line: int = 0

    def __str__(self):
        return self.text


_RULE_TOKEN = re.compile(r"""
    \s*(?:
      (?P<var>\$[A-Za-z_]\w*)
    | (?P<num>-?(?:\d+\.\d*(?:[eE][-+]?\d+)?|\d+[eE][-+]?\d+|0[xX][0-9a-fA-F]+|\d+))
    | (?P<leaf>[A-Za-z_]\w*(?:\[\d+\])+)
    | (?P<op>\?:|<<|>>|<=|>=|==|!=|&&|\|\||min|max|neg|[-+*/%<>&|^~!])
    | (?P<punct>[(),])
    )""", re.VERBOSE)


def _rule_tokens(text, line):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _RULE_TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise RuleError(f"line {line}: cannot read rule text at {text[pos:pos + 12]!r}")
        pos = m.end()
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
    return out


def _parse_term(toks, i, line):
    if i >= len(toks):
        raise RuleError(f"line {line}: unexpected end of rule")
    kind, text = toks[i]
    if kind == "var":
        return PVar(text[1:]), i + 1
    if kind == "num":
        v = float(text) if ("." in text or "e" in text.lower()) and not text.lower().startswith(("0x", "-0x")) \
            else int(text, 0)
        return PConst(v), i + 1
    if kind == "leaf":
        name = text[:text.index("[")]
        idx = tuple(int(x) for x in re.findall(r"\[(\d+)\]", text))
        return PLeaf(name, idx), i + 1
    if kind == "op":
        if i + 1 >= len(toks) or toks[i + 1] != ("punct", "("):
            raise RuleError(f"line {line}: operator {text} must be followed by '('")
        i += 2
        args = []
        while True:
            if i < len(toks) and toks[i] == ("punct", ")"):
                i += 1
                break
            arg, i = _parse_term(toks, i, line)
            args.append(arg)
            if i < len(toks) and toks[i] == ("punct", ","):
                i += 1
        if not args:
            raise RuleError(f"line {line}: operator {text} has no operands")
        return POp(text, tuple(args)), i
    raise RuleError(f"line {line}: unexpected {text!r}")


def _root_kind(p):
    if isinstance(p, PVar):
        return "$"
    if isinstance(p, PConst):
        return CONST
    if isinstance(p, PLeaf):
        return LEAF
    return p.op


def _pvars(p, out):
    if isinstance(p, PVar):
        out.add(p.name)
    elif isinstance(p, POp):
        for a in p.args:
            _pvars(a, out)
    return out


def _check_pattern(p, line):
    if not isinstance(p, POp):
        return
    if p.op in AC_OPS:
        kinds = [_root_kind(a) for a in p.args]
        if kinds.count("$") > 1:
            raise RuleError(f"line {line}: at most one $-variable may sit directly under {p.op}")
        if len(set(kinds)) != len(kinds):
            raise RuleError(f"line {line}: operands of {p.op} need pairwise distinct root kinds")
    for a in p.args:
        _check_pattern(a, line)


def parse_rule(text: str, line: int = 0) -> Rule:
    if "=>" not in text:
        raise RuleError(f"line {line}: expected 'pattern => replacement'")
    lhs, rhs = text.split("=>", 1)
    pattern = _parse_whole(lhs, line)
    replacement = _parse_whole(rhs, line)
    if not isinstance(pattern, POp):
        raise RuleError(f"line {line}: the pattern must be an operator application")
    _check_pattern(pattern, line)
    unbound = _pvars(replacement, set()) - _pvars(pattern, set())
    if unbound:
        raise RuleError(f"line {line}: replacement uses unbound variables {sorted(unbound)}")
    return Rule(pattern, replacement, text.strip(), line)


def _parse_whole(text, line):
    toks = _rule_tokens(text, line)
    if not toks:
        raise RuleError(f"line {line}: empty rule side")
    term, i = _parse_term(toks, 0, line)
    if i != len(toks):
        raise RuleError(f"line {line}: trailing text after term")
    return term


def parse_rules(text: str) -> list[Rule]:
    """One rule per line; ``#`` starts a comment."""
    rules = []
    for n, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0].strip()
        if body:
            rules.append(parse_rule(body, n))
    return rules


def load_rules(path) -> list[Rule]:
    with open(path, encoding="utf-8") as f:
        return parse_rules(f.read())


BUILTIN_RULES = parse_rules("""
/($x, $x) => 1     # unsound at x = 0, hence opt-in
+($x, 0) => $x
*($x, 0) => 0
""")


# -- normalization -------------------------------------------------------------

@dataclass
class EquivOptions:
    ac_normalize: bool = False
    builtin_rules: bool = False
    user_rules: list = field(default_factory=list)
    compare_set: str = NONLOCAL
    rewrite_budget: int = DEFAULT_REWRITE_BUDGET

    def rules(self) -> list[Rule]:
        # file order first, then the built-ins
        return list(self.user_rules) + (BUILTIN_RULES if self.builtin_rules else [])

    @property
    def normalizing(self) -> bool:
        return self.ac_normalize or bool(self.rules())


class Normalizer:
    """Memoized bottom-up normalizer over one pool."""

    def __init__(self, pool: SymPool, ac: bool = True, rules=(), budget=DEFAULT_REWRITE_BUDGET):
        self.pool = pool
        self.ac = ac
        self.rules = list(rules)
        self.budget = budget
        self.memo: dict[SymNode, SymNode] = {}
        self.keys: dict[SymNode, tuple] = {}
        self.fired: dict[str, int] = {}
        self.rewrites = 0

    def __call__(self, v):
        if type(v) is not SymNode:
            return v
        r = self.node(v)
        return r.args[0] if r.op == CONST else r

    def node(self, root: SymNode) -> SymNode:
        memo = self.memo
        if root in memo:
            return memo[root]
        ac = self.ac
        gathered = {}
        stack = [root]
        while stack:
            n = stack[-1]
            if n in memo:
                stack.pop()
                continue
            if n.op == LEAF or n.op == CONST:
                memo[n] = n
                stack.pop()
                continue
            kids = gathered.get(n)
            if kids is None:
                kids = gathered[n] = _operands(n) if ac and n.op in AC_OPS else n.args
            missing = [c for c in kids if c not in memo]
            if missing:
                stack.extend(missing)
                continue
            stack.pop()
            r = self._build(n.op, tuple(memo[c] for c in kids), n.line)
            memo[n] = r
            memo.setdefault(r, r)
        return memo[root]

    def _build(self, op, kids, line):
        pool = self.pool
        if self.ac and op in AC_OPS:
            flat = []
            for k in kids:
                if k.op == op:
                    flat.extend(k.args)
                else:
                    flat.append(k)
            flat.sort(key=self.key)
            kids = tuple(flat)
        r = pool.op(op, kids, line)
        if self.rules:
            r = self._rewrite(r)
        return r

    def _rewrite(self, n):
        for rule in self.rules:
            env = {}
            if _match(rule.pattern, n, env, self.pool):
                self.rewrites += 1
                if self.rewrites > self.budget:
                    raise RewriteBudgetExceeded(f"rewrite budget of {self.budget} exhausted")
                self.fired[rule.text] = self.fired.get(rule.text, 0) + 1
                out = _instantiate(rule.replacement, env, self.pool, n)
                return self.node(out) if out is not n else n
        return n

    def key(self, n: SymNode) -> tuple:
        """Total order: constants, then leaves by name and index, then operators."""
        k = self.keys.get(n)
        if k is not None:
            return k
        for m in postorder([n], skip=self.keys):
            if m.op == CONST:
                v = m.args[0]
                km = (0, 0, v, "") if type(v) is int else (0, 1, 0, v.hex())
            elif m.op == LEAF:
                km = (1, m.args[0], m.args[1])
            else:
                km = (2, _OP_RANK.get(m.op, len(_OP_RANK)), m.op, tuple(self.keys[c] for c in m.args))
            self.keys[m] = km
        return self.keys[n]


def _operands(n: SymNode) -> list:
    """Operands of the maximal run of ``n.op`` rooted at ``n``, left to right."""
    op = n.op
    out = []
    stack = [n]
    while stack:
        m = stack.pop()
        if m.op == op:
            stack.extend(reversed(m.args))
        else:
            out.append(m)
    return out


def normalize_ac(v, pool: SymPool):
    """Flatten and sort +, *, min and max everywhere under ``v``."""
    return Normalizer(pool, ac=True)(v)


def apply_rules(v, rules, pool: SymPool, budget=DEFAULT_REWRITE_BUDGET):
    return Normalizer(pool, ac=False, rules=rules, budget=budget)(v)


def _const_eq(a, b):
    return a == b and not (type(a) is float and a != a)


def _match(p, n: SymNode, env, pool) -> bool:
    if isinstance(p, PVar):
        bound = env.get(p.name)
        if bound is None:
            env[p.name] = n
            return True
        return bound is n
    if isinstance(p, PConst):
        return n.op == CONST and _const_eq(n.args[0], p.value)
    if isinstance(p, PLeaf):
        return n.op == LEAF and n.args == (p.name, p.idx)
    if n.op != p.op:
        return False
    if p.op not in AC_OPS:
        if len(n.args) != len(p.args):
            return False
        return all(_match(pa, c, env, pool) for pa, c in zip(p.args, n.args))
    # AC: each non-variable operand grabs the first unused child it matches
    rest = list(n.args)
    var = None
    for pa in p.args:
        if isinstance(pa, PVar):
            var = pa
            continue
        for i, c in enumerate(rest):
            trial = dict(env)
            if _match(pa, c, trial, pool):
                env.clear()
                env.update(trial)
                del rest[i]
                break
        else:
            return False
    if var is None:
        return not rest
    if not rest:
        return False
    val = rest[0] if len(rest) == 1 else pool.op(p.op, tuple(rest), n.line)
    return _match(var, val, env, pool)


def _instantiate(r, env, pool: SymPool, at: SymNode) -> SymNode:
    if isinstance(r, PVar):
        return env[r.name]
    if isinstance(r, PConst):
        v = r.value
        if at.kind == A.FLOAT and type(v) is int:
            v = float(v)
        elif at.kind == A.INT and type(v) is float:
            v = int(v)
        return pool.const(v, at.line)
    if isinstance(r, PLeaf):
        return pool.leaf(r.name, r.idx, at.kind, at.line)
    kids = tuple(_instantiate(a, env, pool, at) for a in r.args)
    return pool.op(r.op, kids, at.line)


# -- comparison ----------------------------------------------------------------

def nonlocal_vars(ma, mb) -> set:
    """Root-declared user variables of either memory."""
    return {n for n in ma.root_names() | mb.root_names() if not n.startswith(INTERNAL_PREFIX)}


def _cells(memory, compare_set, names):
    """{(task, name): {idx: value}} restricted to the comparison set."""
    out = {}
    for key, arr in memory.store.items():
        if arr.captured:
            continue
        task, name = key
        if compare_set == NONLOCAL and (task != ROOT or name not in names):
            continue
        out[key] = arr.cells
    return out


@dataclass
class Mismatch:
    task: tuple
    name: str
    idx: tuple
    a: object
    b: object
    pair: tuple | None = None  # first differing (node_a, node_b)

    @property
    def cell(self) -> str:
        return fmt_leaf(self.name, self.idx)

    def to_dict(self, max_len=200):
        d = {"variable": self.name, "index": list(self.idx), "cell": self.cell,
             "task": ".".join(map(str, self.task)),
             "a": _show(self.a, max_len), "b": _show(self.b, max_len)}
        if self.pair is not None:
            x, y = self.pair
            d["first_difference"] = {"a": _show(x, 80), "a_line": _line(x),
                                     "b": _show(y, 80), "b_line": _line(y)}
        return d


def _show(v, max_len):
    return "undefined" if v is None else to_prefix(v, max_len=max_len)


def _line(v):
    return v.line if type(v) is SymNode else None


@dataclass
class EquivReport:
    equivalent: bool
    variables: list
    cells: int
    mismatches: list
    mismatch_count: int
    rules_fired: dict
    ac: bool
    t_eq: float = 0.0

    @property
    def verdict(self) -> str:
        return "Equivalent" if self.equivalent else "Mismatch"

    @property
    def first(self) -> Mismatch | None:
        return self.mismatches[0] if self.mismatches else None

    def to_dict(self, timing=True):
        d = {"verdict": self.verdict, "variables": self.variables, "cells_compared": self.cells,
             "mismatch_count": self.mismatch_count,
             "mismatches": [m.to_dict() for m in self.mismatches],
             "ac_normalize": self.ac, "rules_fired": dict(sorted(self.rules_fired.items()))}
        if timing:
            d["t_eq"] = round(self.t_eq, 6)
        return d

    def render(self) -> str:
        out = [f"{self.verdict}: {self.cells} cells over {len(self.variables)} variables"]
        if self.rules_fired:
            for text, k in sorted(self.rules_fired.items()):
                out.append(f"  rule fired {k}x: {text}")
        for m in self.mismatches[:5]:
            out.append(f"  {m.cell}: {_show(m.a, 120)}  vs  {_show(m.b, 120)}")
            if m.pair is not None:
                x, y = m.pair
                out.append(f"    first difference: {_show(x, 60)} (line {_line(x)}) vs "
                           f"{_show(y, 60)} (line {_line(y)})")
        if self.mismatch_count > 5:
            out.append(f"  ... {self.mismatch_count - 5} more")
        return "\n".join(out)


def first_difference(a, b):
    """Walk two values in lockstep and return the first node pair that differs."""
    while True:
        if type(a) is not SymNode or type(b) is not SymNode:
            return a, b
        if a is b:
            return None
        if a.op != b.op or len(a.args) != len(b.args) or a.op in (LEAF, CONST):
            return a, b
        for x, y in zip(a.args, b.args):
            if x is not y:
                a, b = x, y
                break
        else:
            return a, b


def _same(a, b) -> bool:
    if type(a) is SymNode or type(b) is SymNode:
        return a is b
    if type(a) is Err or type(b) is Err:
        return a == b
    return values_equal(a, b)


def check_equiv(ra, rb, opts: EquivOptions | None = None, keep: int = 50) -> EquivReport:
    """Compare the final memories of two clean runs.

    ``ra``/``rb`` carry ``memory`` and ``pool``.  If the pools differ the
    second memory is imported into the first pool.
    """
    opts = opts or EquivOptions()
    t0 = time.perf_counter()
    pool = ra.pool
    names = nonlocal_vars(ra.memory, rb.memory)
    ca = _cells(ra.memory, opts.compare_set, names)
    cb = _cells(rb.memory, opts.compare_set, names)
    if rb.pool is not pool:
        roots = [v for cells in cb.values() for v in cells.values() if type(v) is SymNode]
        memo = pool.import_many(roots)
        cb = {k: {i: memo.get(v, v) if type(v) is SymNode else v for i, v in cells.items()}
              for k, cells in cb.items()}
    norm = None
    if opts.normalizing:
        norm = Normalizer(pool, ac=opts.ac_normalize, rules=opts.rules(), budget=opts.rewrite_budget)
    mismatches, count, total = [], 0, 0
    empty = {}
    for key in sorted(set(ca) | set(cb)):
        xa = ca.get(key, empty)
        xb = cb.get(key, empty)
        for idx in sorted(set(xa) | set(xb)):
            total += 1
            a = xa.get(idx)
            b = xb.get(idx)
            if a is None or b is None:
                ok = a is None and b is None
            else:
                if norm is not None:
                    a, b = norm(a), norm(b)
                ok = _same(a, b)
            if not ok:
                count += 1
                if len(mismatches) < keep:
                    pair = first_difference(a, b) if a is not None and b is not None else None
                    mismatches.append(Mismatch(key[0], key[1], idx, a, b, pair))
    variables = sorted({k[1] for k in ca} | {k[1] for k in cb})
    rep = EquivReport(count == 0, variables, total, mismatches, count,
                      dict(norm.fired) if norm else {}, opts.ac_normalize)
    rep.t_eq = time.perf_counter() - t0
    return rep


# -- dot -----------------------------------------------------------------------

def _esc(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def _label(n) -> str:
    if type(n) is not SymNode:
        return _show(n, 40)
    if n.op == LEAF:
        head = fmt_leaf(*n.args)
    elif n.op == CONST:
        head = to_prefix(n)
    else:
        head = n.op
    return f"{head}\\nline {n.line}" if n.line else head


def _cluster(out, tag, title, root, mark, max_nodes):
    out.append(f'  subgraph cluster_{tag} {{')
    out.append(f'    label="{_esc(title)}";')
    if type(root) is not SymNode:
        fill = ', style=filled, fillcolor="tomato"' if mark is root or mark is None else ""
        out.append(f'    {tag}0 [label="{_esc(_label(root))}"{fill}];')
        out.append("  }")
        return
    ids = {}
    nodes = list(postorder([root]))
    if len(nodes) > max_nodes:
        # keep the path down to the marked node, then the part nearest the root
        keep = set(_path_to(root, mark)) if type(mark) is SymNode else set()
        frontier = deque([root])
        seen = {root}
        while frontier and len(keep) < max_nodes:
            n = frontier.popleft()
            keep.add(n)
            for c in n.children:
                if c not in seen:
                    seen.add(c)
                    frontier.append(c)
        nodes = [n for n in nodes if n in keep]
    for k, n in enumerate(nodes):
        ids[n] = f"{tag}{k}"
    for n in nodes:
        fill = ', style=filled, fillcolor="tomato"' if n is mark else ""
        out.append(f'    {ids[n]} [label="{_esc(_label(n))}"{fill}];')
    for n in nodes:
        for pos, c in enumerate(n.children):
            if c in ids:
                out.append(f'    {ids[n]} -> {ids[c]} [label="{pos}"];')
            else:
                out.append(f'    {ids[n]}_cut{pos} [label="...", shape=plaintext];')
                out.append(f'    {ids[n]} -> {ids[n]}_cut{pos};')
    out.append("  }")


def _path_to(root, mark):
    """Nodes on one root-to-mark path (empty if mark is unreachable)."""
    parent = {root: None}
    queue = [root]
    for n in queue:
        if n is mark:
            out = []
            while n is not None:
                out.append(n)
                n = parent[n]
            return out
        for c in n.children:
            if c not in parent:
                parent[c] = n
                queue.append(c)
    return []


def diff_dot(report: EquivReport, max_nodes: int = 200, which: int = 0) -> str:
    """Two CDAG clusters for one mismatched cell; the first differing pair is filled."""
    if report.equivalent or not report.mismatches:
        raise ValueError("diff_dot needs a Mismatch report")
    m = report.mismatches[which]
    ma, mb = m.pair if m.pair is not None else (None, None)
    out = ["digraph cdag_diff {", '  node [shape=box, fontname="monospace"];']
    _cluster(out, "a", f"A: {m.cell}", m.a, ma, max_nodes)
    _cluster(out, "b", f"B: {m.cell}", m.b, mb, max_nodes)
    out.append("}")
    return "\n".join(out) + "\n"
