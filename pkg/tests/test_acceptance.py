"""Acceptance suite: one PASS/FAIL line per criterion.

Run alone with ``pytest -s tests/test_acceptance.py`` or as a script.  The
lines are also written to the terminal during a plain ``pytest -v`` run.
"""
import random
import time

import numpy as np
import pytest

from pircheck.equiv import EquivOptions, Normalizer, check_equiv
from pircheck.errors import Category
from pircheck.interp import Interpreter
from pircheck.lang import ast as A
from pircheck.lang import load_file
from pircheck.schedfuzz import explore_exhaustive
from pircheck.symval import SymPool, evaluate, to_prefix

from conftest import conc_programs, corpus, mem_text, sequential_programs
from test_equiv import final_array, fw_reference, leaf_env, random_env, random_tree

KERNELS = corpus("kernels")

# pinned tolerances
HANDOFF_SECONDS = 1.0
DETERMINISM_MIN_PROGRAMS = 20
DETERMINISM_MAX_STMTS = 30
DETERMINISM_LIMIT = 10 ** 4
DETERMINISM_SECONDS = 300.0
ORACLE_SEEDS = 20
AC_TREES = 1000
MIN_STMTS_PER_SEC = 1e5
MAX_TEQ_FRACTION = 0.10


def verdict(capsys, n, title, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {title}"
    if detail:
        line += f" ({detail})"
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def run(path, **kw):
    return Interpreter(load_file(path), **kw).run()


def test_criterion_1_handoff(capsys):
    t0 = time.perf_counter()
    res = run(corpus("handoff.pir"))
    elapsed = time.perf_counter() - t0
    a = res.memory.root_array("A").cells
    clean = res.ok and to_prefix(a[(0,)]) == "*(+(A[0],1),2)" and to_prefix(a[(1,)]) == "*(+(A[1],1),2)"
    err = run(corpus("errors", "handoff_no_wait.pir")).error
    racy = err is not None and err.category is Category.RACE and err.cell.startswith("A[") \
        and len(set(err.lines)) == 2
    verdict(capsys, 1, "semaphore hand-off golden program", clean and racy and elapsed < HANDOFF_SECONDS,
            f"{elapsed:.3f}s, no-wait variant: {err and err.category.value} on {err and err.cell} "
            f"lines {err and sorted(err.lines)}")


def test_criterion_2_determinism(capsys):
    progs = conc_programs()
    t0 = time.perf_counter()
    bad = []
    for p in progs:
        prog = load_file(p)
        size = sum(1 for _ in A.walk_stmts(prog.root))
        ex = explore_exhaustive(prog, limit=DETERMINISM_LIMIT)
        if not ex.complete or ex.distinct != 1 or size > DETERMINISM_MAX_STMTS:
            bad.append(p.stem)
    elapsed = time.perf_counter() - t0
    ok = len(progs) >= DETERMINISM_MIN_PROGRAMS and not bad and elapsed < DETERMINISM_SECONDS
    verdict(capsys, 2, "exhaustive exploration yields one outcome per program", ok,
            f"{len(progs)} programs, {elapsed:.1f}s, failing: {bad or 'none'}")


ZOO = [("race", Category.RACE, 1, [3, 5]),
       ("double_set", Category.DOUBLE_SET, 2, [3, 6, 8]),
       ("double_acquire", Category.DOUBLE_ACQUIRE_MATCH, 3, [3, 6, 8]),
       ("parallel_acquires", Category.PARALLEL_ACQUIRES, 4, [3, 6]),
       ("over_release", Category.OVER_RELEASE, 5, [3, 5, 6])]


def test_criterion_3_validity_zoo(capsys):
    wrong = []
    for name, cat, item, lines in ZOO:
        for paranoid in (False, True):
            res = run(corpus("errors", f"{name}.pir"), paranoid=paranoid)
            e = res.error
            if e is None or e.category is not cat or e.item != item or sorted(e.lines) != lines:
                wrong.append(f"{name}{'/paranoid' if paranoid else ''}")
            elif paranoid and res.paranoid_items != [item]:
                wrong.append(f"{name}/paranoid items {res.paranoid_items}")
    verdict(capsys, 3, "validity items 1-5 with witness lines, incremental and paranoid agree",
            not wrong, f"wrong: {wrong or 'none'}")


def test_criterion_4_matmul_and_fw(capsys):
    runs = {k: run(KERNELS / f"{k}.pir") for k in
            ("matmul16", "matmul16_tiled4", "matmul16_unrolled", "fw16", "fw16_ktiled")}
    eq_tiled = check_equiv(runs["matmul16"], runs["matmul16_tiled4"]).equivalent
    eq_unrolled = check_equiv(runs["matmul16"], runs["matmul16_unrolled"]).equivalent
    fw_mismatch = not check_equiv(runs["fw16"], runs["fw16_ktiled"]).equivalent

    oracle_eq, fw_differs = True, False
    for seed in range(ORACLE_SEEDS):
        rng = np.random.default_rng(seed)
        ma, mb = rng.integers(-50, 50, (16, 16)), rng.integers(-50, 50, (16, 16))
        env = leaf_env({"A": ma, "B": mb})
        ref = final_array(runs["matmul16"], "C", (16, 16), env)
        for k in ("matmul16_tiled4", "matmul16_unrolled"):
            oracle_eq &= bool((final_array(runs[k], "C", (16, 16), env) == ref).all())
        oracle_eq &= bool((ref == ma @ mb).all())
        P = rng.integers(0, 100, (16, 16))
        env = leaf_env({"path": P})
        good = final_array(runs["fw16"], "path", (16, 16), env)
        oracle_eq &= bool((good == fw_reference(P)).all())
        fw_differs |= not (final_array(runs["fw16_ktiled"], "path", (16, 16), env) == good).all()
    ok = eq_tiled and eq_unrolled and fw_mismatch and oracle_eq and fw_differs
    verdict(capsys, 4, "matmul variants Equivalent, k-tiled FW Mismatch, concrete oracle agrees", ok,
            f"tiled={eq_tiled} unrolled={eq_unrolled} fw_mismatch={fw_mismatch} "
            f"oracle_equal={oracle_eq} fw_bug_seen={fw_differs}")


def test_criterion_5_ac(capsys):
    a, b = run(KERNELS / "elementwise_ab.pir"), run(KERNELS / "elementwise_ba.pir")
    plain = check_equiv(a, b).equivalent
    with_ac = check_equiv(a, b, EquivOptions(ac_normalize=True)).equivalent
    rng = random.Random(1)
    pool = SymPool()
    norm = Normalizer(pool, ac=True)
    bad = 0
    for _ in range(AC_TREES):
        t = random_tree(rng, pool)
        n = norm(t)
        env = random_env(rng)
        if norm(n) is not n or evaluate(n, dict(env)) != evaluate(t, dict(env)):
            bad += 1
    ok = not plain and with_ac and bad == 0
    verdict(capsys, 5, "A*B vs B*A needs AC; normalization idempotent and sound", ok,
            f"plain={'Equivalent' if plain else 'Mismatch'} ac={'Equivalent' if with_ac else 'Mismatch'} "
            f"bad trees={bad}/{AC_TREES}")


def test_criterion_6_throughput(capsys):
    best = 0.0
    for _ in range(3):
        st = run(KERNELS / "2mm.pir").stats
        best = max(best, st.nb_s / st.t_int)
    worst = 0.0
    for a, b in [("matmul16", "matmul16_tiled4"), ("2mm", "2mm_fused"), ("gemm", "gemm_tiled")]:
        pool = SymPool()
        ra, rb = run(KERNELS / f"{a}.pir", pool=pool), run(KERNELS / f"{b}.pir", pool=pool)
        rep = check_equiv(ra, rb)
        assert rep.equivalent
        worst = max(worst, rep.t_eq / (ra.stats.t_int + rb.stats.t_int))
    ok = best >= MIN_STMTS_PER_SEC and worst <= MAX_TEQ_FRACTION
    verdict(capsys, 6, "interpreter throughput and equivalence cost", ok,
            f"{best / 1e3:.0f}k statements/s on 2mm, worst t_eq/t_int {worst:.1%}")


def test_criterion_7_macro_nodes(capsys):
    bad = []
    for p in sequential_programs():
        prog = load_file(p)
        on, off = Interpreter(prog, merge=True).run(), Interpreter(prog, merge=False).run()
        same = mem_text(on) == mem_text(off) and on.ok == off.ok
        if on.stats.hb_rat != 0 or not same:
            bad.append(p.stem)
    verdict(capsys, 7, "sequential programs keep hb_rat 0 and merging is transparent", not bad,
            f"{len(sequential_programs())} programs, failing: {bad or 'none'}")


def test_criterion_8_deadlocks(capsys):
    single = run(corpus("errors", "deadlock_single.pir")).error
    circ = run(corpus("errors", "deadlock_circular.pir")).error
    ok_single = single is not None and single.category is Category.DEADLOCK \
        and [w.task for w in single.witnesses] == [(0,)] and "s[0]" in single.cell
    ok_circ = circ is not None and circ.category is Category.DEADLOCK \
        and sorted(w.task for w in circ.witnesses) == [(0, 1), (0, 2)] \
        and "a[0]" in circ.message and "b[0]" in circ.message
    verdict(capsys, 8, "deadlocks name blocked tasks and semaphores", ok_single and ok_circ,
            f"single={ok_single} circular={ok_circ}")


if __name__ == "__main__":
    raise SystemExit(pytest.main(["-q", "-s", __file__]))
