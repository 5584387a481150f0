"""Command-line front end: ``pircheck check|equiv|fuzz|dot|stats``.

Exit codes:
  0   clean run / equivalent / single fuzz outcome
  1   input could not be read, lexed, parsed or elaborated; bad rule file
  2   verification error (race, deadlock, semaphore misuse, ...)
  3   equivalence mismatch
  4   fuzzing found schedule-dependent outcomes
  64  command-line usage error
"""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .equiv import (NONLOCAL, STRICT, EquivOptions, RewriteBudgetExceeded, RuleError,
                    check_equiv, diff_dot, load_rules)
from .interp import Interpreter
from .lang import ElabError, LexError, ParseError, load_file
from .schedfuzz import DEFAULT_LIMIT, DEFAULT_SEEDS, divergence_report, explore, shrink
from .symval import SymPool

EXIT_OK, EXIT_INPUT, EXIT_VERIF, EXIT_MISMATCH, EXIT_DIVERGE, EXIT_USAGE = 0, 1, 2, 3, 4, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class InputError(Exception):
    pass


def _load(path):
    try:
        return load_file(path)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from e
    except (LexError, ParseError, ElabError) as e:
        raise InputError(str(e)) from e


def _run(prog, args, pool=None):
    it = Interpreter(prog, merge=not args.no_merge, paranoid=args.paranoid,
                     budget=args.budget, pool=pool)
    return it.run()


def _emit(args, text: str):
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _memory_dict(mem, max_len=400):
    from .symval import to_prefix
    return {f"{'.'.join(map(str, t))} {n}{''.join(f'[{i}]' for i in idx)}": to_prefix(v, max_len=max_len)
            for t, n, idx, v in mem.items()}


def _trace_lines(trace):
    out = []
    for ev in trace:
        src = f" from {ev['from']}" if ev.get("from") else ""
        out.append(f"  [{ev['step']}] task {ev['task']} line {ev['line']}: "
                   f"{ev['op']}({ev['sem']}, {ev['val']}) {ev.get('status', '')}{src}")
    return out


def _check_report(path, res, args) -> dict:
    timing = not args.no_timing
    d = {"file": path, "status": "ok" if res.ok else "error", "stats": res.stats.to_dict(timing)}
    if res.error is not None:
        d["error"] = res.error.to_dict()
    if args.paranoid:
        d["paranoid_items"] = res.paranoid_items
    if args.memory:
        d["memory"] = _memory_dict(res.memory)
    if args.trace_sem:
        d["semaphore_trace"] = res.trace
    return d


def _stats_text(st, timing=True):
    d = st.to_dict(timing)
    return "  " + "  ".join(f"{k.replace('_', '-')}={v}" for k, v in d.items())


def cmd_check(args) -> int:
    prog = _load(args.file)
    res = _run(prog, args)
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as f:
            f.write(res.graph.to_dot())
    if args.format == "json":
        _emit(args, _dump(_check_report(args.file, res, args)))
    else:
        out = []
        if res.ok:
            out.append(f"ok: {args.file}")
        else:
            out.append(res.error.render())
        out.append(_stats_text(res.stats, not args.no_timing))
        if args.paranoid:
            out.append(f"  paranoid full-graph check: {res.paranoid_items or 'no violations'}")
        if args.memory:
            out.append(res.memory.serialize(max_len=400).rstrip("\n"))
        if args.trace_sem:
            out.append("semaphore trace:")
            out.extend(_trace_lines(res.trace))
        _emit(args, "\n".join(out) + "\n")
    return EXIT_OK if res.ok else EXIT_VERIF


def _equiv_options(args) -> EquivOptions:
    rules = []
    if args.rules:
        try:
            rules = load_rules(args.rules)
        except OSError as e:
            raise InputError(f"cannot read {args.rules}: {e.strerror or e}") from e
        except RuleError as e:
            raise InputError(f"{args.rules}: {e}") from e
    return EquivOptions(ac_normalize=args.ac, builtin_rules=args.builtin_rules, user_rules=rules,
                        compare_set=STRICT if args.strict else NONLOCAL)


def _equiv(args):
    opts = _equiv_options(args)
    pa, pb = _load(args.a), _load(args.b)
    pool = SymPool()
    ra = _run(pa, args, pool)
    rb = _run(pb, args, pool) if ra.ok else None
    return opts, ra, rb


def cmd_equiv(args) -> int:
    opts, ra, rb = _equiv(args)
    timing = not args.no_timing
    bad = ra if not ra.ok else (rb if not rb.ok else None)
    if bad is not None:
        which = args.a if bad is ra else args.b
        if args.format == "json":
            _emit(args, _dump({"file": which, "status": "error", "error": bad.error.to_dict()}))
        else:
            _emit(args, f"{which}: verification failed, equivalence not attempted\n{bad.error.render()}\n")
        return EXIT_VERIF
    try:
        rep = check_equiv(ra, rb, opts)
    except RewriteBudgetExceeded as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_VERIF
    if args.dot and not rep.equivalent:
        with open(args.dot, "w", encoding="utf-8") as f:
            f.write(diff_dot(rep))
    if args.format == "json":
        d = {"a": args.a, "b": args.b, "status": rep.verdict, "report": rep.to_dict(timing),
             "stats_a": ra.stats.to_dict(timing), "stats_b": rb.stats.to_dict(timing)}
        if timing:
            d["t_int_a"], d["t_int_b"], d["t_eq"] = ra.stats.t_int, rb.stats.t_int, rep.t_eq
        _emit(args, _dump(d))
    else:
        out = [rep.render()]
        if timing:
            out.append(f"  t_int: {ra.stats.t_int:.4f}s + {rb.stats.t_int:.4f}s  t_eq: {rep.t_eq:.4f}s")
        _emit(args, "\n".join(out) + "\n")
    return EXIT_OK if rep.equivalent else EXIT_MISMATCH


def cmd_fuzz(args) -> int:
    prog = _load(args.file)
    kw = {"merge": not args.no_merge, "budget": args.budget, "faults": set(args.fault or ())}
    ex = explore(prog, args.mode, limit=args.limit, seeds=args.seeds, **kw)
    shrunk = None
    if ex.distinct > 1 and args.shrink:
        shrunk = shrink(prog, **kw)
    report = divergence_report(ex, shrunk)
    report["summary"] = ex.summary()
    if ex.distinct > 1 and args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            f.write(_dump(report))
    if args.format == "json":
        _emit(args, _dump(report))
    else:
        out = [ex.summary()]
        if ex.distinct > 1:
            for o in report["outcomes"]:
                first = o["outcome"].splitlines()[:4]
                out.append("  outcome: " + " | ".join(first))
            if shrunk is not None:
                out.append(f"reproducer ({shrunk.statements} statements):")
                out.append(shrunk.text.rstrip("\n"))
        _emit(args, "\n".join(out) + "\n")
    return EXIT_OK if ex.distinct == 1 else EXIT_DIVERGE


def cmd_dot(args) -> int:
    if len(args.files) == 1:
        res = _run(_load(args.files[0]), args)
        _emit(args, res.graph.to_dot())
        return EXIT_OK if res.ok else EXIT_VERIF
    if len(args.files) != 2:
        raise UsageError("dot takes one file (happens-before graph) or two (CDAG diff)")
    args.a, args.b = args.files
    opts, ra, rb = _equiv(args)
    if not ra.ok or not rb.ok:
        bad = ra if not ra.ok else rb
        sys.stderr.write(bad.error.render() + "\n")
        return EXIT_VERIF
    rep = check_equiv(ra, rb, opts)
    if rep.equivalent:
        sys.stderr.write("programs are equivalent; no diff to draw\n")
        return EXIT_OK
    _emit(args, diff_dot(rep))
    return EXIT_MISMATCH


def cmd_stats(args) -> int:
    res = _run(_load(args.file), args)
    d = {"file": args.file, "status": "ok" if res.ok else str(res.error.category),
         **res.stats.to_dict(not args.no_timing)}
    _emit(args, _dump(d))
    return EXIT_OK if res.ok else EXIT_VERIF


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pircheck", description="Verify and compare parallel .pir programs.")
    p.add_argument("--version", action="version", version=f"pircheck {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--budget", type=int, default=None,
                        help="step budget (default: $PIRCHECK_STEP_BUDGET or 1e8)")
        sp.add_argument("--paranoid", action="store_true",
                        help="re-validate the whole graph after every step")
        sp.add_argument("--no-merge", action="store_true", help="disable macro-node merging")
        sp.add_argument("--format", choices=("text", "json"), default="text")
        sp.add_argument("-o", "--output", help="write the report here instead of stdout")
        sp.add_argument("--no-timing", action="store_true", help="omit wall-clock fields")

    def eq_flags(sp):
        sp.add_argument("--ac", action="store_true", help="flatten and sort +, *, min, max")
        sp.add_argument("--builtin-rules", action="store_true",
                        help="enable /(x,x)=1, +(x,0)=x, *(x,0)=0")
        sp.add_argument("--rules", help="rewrite rule file")
        sp.add_argument("--strict", action="store_true",
                        help="compare every variable, task-local ones included")

    c = sub.add_parser("check", help="interpret one program and report errors")
    c.add_argument("file")
    common(c)
    c.add_argument("--trace-sem", action="store_true", help="print the semaphore event trace")
    c.add_argument("--memory", action="store_true", help="print the final memory")
    c.add_argument("--dot", help="also write the happens-before graph here")
    c.set_defaults(func=cmd_check)

    e = sub.add_parser("equiv", help="check two programs for equivalence")
    e.add_argument("a")
    e.add_argument("b")
    common(e)
    eq_flags(e)
    e.add_argument("--dot", help="write the CDAG diff of the first mismatch here")
    e.set_defaults(func=cmd_equiv)

    f = sub.add_parser("fuzz", help="explore schedules and compare outcomes")
    f.add_argument("file")
    common(f)
    f.add_argument("--mode", choices=("exhaustive", "random", "both"), default="both")
    f.add_argument("--limit", type=int, default=DEFAULT_LIMIT, help="max exhaustive interleavings")
    f.add_argument("--seeds", type=int, default=DEFAULT_SEEDS, help="random schedules")
    f.add_argument("--shrink", action="store_true", help="minimize a divergent program")
    f.add_argument("--report", help="write a divergence report here")
    f.add_argument("--fault", action="append", choices=("no_read_check", "skip_wait_edge"),
                   help=argparse.SUPPRESS)
    f.set_defaults(func=cmd_fuzz)

    d = sub.add_parser("dot", help="happens-before graph (one file) or CDAG diff (two files)")
    d.add_argument("files", nargs="+")
    common(d)
    eq_flags(d)
    d.set_defaults(func=cmd_dot)

    s = sub.add_parser("stats", help="print run statistics as JSON")
    s.add_argument("file")
    common(s)
    s.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except InputError as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_INPUT
    except UsageError as e:
        sys.stderr.write(f"pircheck: error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
