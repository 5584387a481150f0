"""Schedule exploration: rerun a program under other task interleavings.

Every run replays a list of choices, one per branch point (a step where
more than one task is runnable; the choice indexes the runnable tasks
sorted by path).  Exhaustive mode walks the choice tree depth first,
random mode draws choices from seeded generators.  Any program whose
runs disagree is a bug in the interpreter, and :func:`shrink` reduces it.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .errors import VerifError
from .interp import Interpreter, RUNNABLE
from .lang import ast as A
from .lang.pretty import pretty
from .symval import SymNode, digest, to_prefix

DEFAULT_LIMIT = 10 ** 4
DEFAULT_SEEDS = 64


def outcome_key(interp: Interpreter, error: VerifError | None) -> tuple:
    """Hashable summary of a finished run; timing is left out."""
    if error is not None:
        return ("error", str(error.category))
    sym = lambda v: "#" + digest(v).hex() if type(v) is SymNode else to_prefix(v)
    st = interp.stats.to_dict(timing=False)
    st["hb_nodes"] = len(interp.graph.nodes)
    st["cdag_nodes"] = len(interp.pool)
    return ("ok", interp.memory.serialize(sym=sym), tuple(sorted(st.items())))


@dataclass
class Run:
    choices: list
    arity: list       # number of runnable tasks at each branch point
    schedule: list    # task path stepped at every step
    outcome: tuple
    error: VerifError | None = None


def run_schedule(prog: A.CoreProgram, choose, **kw) -> Run:
    """Step the program, asking ``choose(depth, n)`` at every branch point."""
    it = Interpreter(prog, **kw)
    choices, arity, schedule = [], [], []
    err = None
    try:
        while True:
            ready = [t for t in it.tasks if t.status is RUNNABLE]
            if not ready:
                it.finalize()
                break
            if len(ready) > 1:
                ready.sort(key=lambda t: t.path)
                c = choose(len(choices), len(ready))
                choices.append(c)
                arity.append(len(ready))
                task = ready[c]
            else:
                task = ready[0]
            schedule.append(task.path)
            it.step(task)
    except VerifError as e:
        err = e
    it.error = err
    return Run(choices, arity, schedule, outcome_key(it, err), err)


@dataclass
class Exploration:
    outcomes: dict = field(default_factory=dict)   # outcome key -> first Run producing it
    runs: int = 0
    exhaustive: bool = False
    complete: bool = False
    truncated: bool = False

    @property
    def distinct(self) -> int:
        return len(self.outcomes)

    @property
    def deterministic(self) -> bool:
        return len(self.outcomes) == 1

    def summary(self) -> str:
        word = "outcome" if self.distinct == 1 else "outcomes"
        s = f"{self.distinct} distinct {word} across {self.runs} schedules"
        if self.exhaustive:
            s += " (exhaustive)" if self.complete else " (interleaving limit reached)"
        return s

    def add(self, run: Run):
        self.runs += 1
        self.outcomes.setdefault(run.outcome, run)


def explore_exhaustive(prog, limit: int = DEFAULT_LIMIT, **kw) -> Exploration:
    ex = Exploration(exhaustive=True)
    prefix: list = []
    while True:
        def choose(depth, n, prefix=prefix):
            return prefix[depth] if depth < len(prefix) else 0
        run = run_schedule(prog, choose, **kw)
        ex.add(run)
        # next sibling of the deepest branch point that still has one
        d = len(run.choices) - 1
        while d >= 0 and run.choices[d] + 1 >= run.arity[d]:
            d -= 1
        if d < 0:
            ex.complete = True
            return ex
        if ex.runs >= limit:
            ex.truncated = True
            return ex
        prefix = run.choices[:d] + [run.choices[d] + 1]


def explore_random(prog, seeds: int = DEFAULT_SEEDS, first_seed: int = 0, **kw) -> Exploration:
    ex = Exploration()
    for s in range(first_seed, first_seed + seeds):
        rng = random.Random(s)
        ex.add(run_schedule(prog, lambda depth, n: rng.randrange(n), **kw))
    return ex


def explore(prog, mode: str = "both", limit: int = DEFAULT_LIMIT, seeds: int = DEFAULT_SEEDS,
            **kw) -> Exploration:
    """``mode`` is ``exhaustive``, ``random`` or ``both`` (exhaustive, then seeds)."""
    if mode == "exhaustive":
        return explore_exhaustive(prog, limit, **kw)
    if mode == "random":
        return explore_random(prog, seeds, **kw)
    if mode != "both":
        raise ValueError(f"unknown exploration mode {mode!r}")
    ex = explore_exhaustive(prog, limit, **kw)
    if not ex.complete:
        rnd = explore_random(prog, seeds, **kw)
        for key, run in rnd.outcomes.items():
            ex.outcomes.setdefault(key, run)
        ex.runs += rnd.runs
    return ex


# -- shrinking -----------------------------------------------------------------

def _removals(stmts):
    """Yield copies of ``stmts`` with one statement (at any depth) removed, outermost first."""
    for i in range(len(stmts)):
        yield stmts[:i] + stmts[i + 1:]
    for i, s in enumerate(stmts):
        for field_name in ("body", "then", "orelse"):
            kids = getattr(s, field_name, None)
            if not kids:
                continue
            for smaller in _removals(kids):
                yield stmts[:i] + [_replace(s, field_name, smaller)] + stmts[i + 1:]


def _replace(s, field_name, value):
    import dataclasses
    return dataclasses.replace(s, **{field_name: value})


def _count(stmts) -> int:
    return sum(1 for _ in A.walk_stmts(stmts))


@dataclass
class ShrinkResult:
    program: A.CoreProgram
    text: str
    statements: int
    runs: list   # two Runs with different outcomes, or [] if none diverged
    shrunk: bool


def _classes(outcomes) -> frozenset:
    """Outcome classes: ``ok`` or the error category."""
    return frozenset(k[0] if k[0] == "ok" else k[1] for k in outcomes)


def _diverges(prog, limit, seeds, kw, want=None):
    try:
        # random schedules are cheap and usually enough to confirm a divergence
        ex = explore_random(prog, seeds, **kw)
        if ex.distinct < 2:
            ex = explore_exhaustive(prog, limit, **kw)
    except Exception:  # a removal made the program ill-formed for the interpreter
        return None
    if ex.distinct < 2:
        return None
    if want is not None and _classes(ex.outcomes) != want:
        return None  # a different divergence, e.g. two unrelated errors racing to be first
    return list(ex.outcomes.values())[:2]


def shrink(prog: A.CoreProgram, limit: int = 500, seeds: int = 16, **kw) -> ShrinkResult:
    """Greedily drop statements while two schedules still disagree the same way.

    A candidate is kept only if its outcome classes (ok or error category)
    equal those of the original divergence.
    """
    runs = _diverges(prog, limit, seeds, kw)
    if runs is None:
        return ShrinkResult(prog, pretty(prog.root), _count(prog.root), [], False)
    want = _classes(explore(prog, "both", limit=limit, seeds=seeds, **kw).outcomes)
    best = list(prog.root)
    changed = True
    while changed:
        changed = False
        for cand in _removals(best):
            trial = A.CoreProgram(cand, prog.kinds, prog.sem_arrays, prog.line_map, prog.origin)
            r = _diverges(trial, limit, seeds, kw, want)
            if r is not None:
                best, runs, changed = cand, r, True
                break
    out = A.CoreProgram(best, prog.kinds, prog.sem_arrays, prog.line_map, prog.origin)
    return ShrinkResult(out, pretty(best), _count(best), runs, len(best) != len(prog.root) or
                        _count(best) != _count(prog.root))


def divergence_report(ex: Exploration, shrunk: ShrinkResult | None = None) -> dict:
    runs = list(ex.outcomes.values())
    d = {"distinct_outcomes": ex.distinct, "schedules": ex.runs, "complete": ex.complete,
         "outcomes": [{"outcome": _outcome_text(r.outcome),
                       "schedule": [".".join(map(str, p)) for p in r.schedule]} for r in runs]}
    if shrunk is not None:
        d["reproducer"] = shrunk.text
        d["reproducer_statements"] = shrunk.statements
        d["reproducer_schedules"] = [[".".join(map(str, p)) for p in r.schedule] for r in shrunk.runs]
    return d


def _outcome_text(key):
    if key[0] == "error":
        return f"error {key[1]}"
    return key[1]
