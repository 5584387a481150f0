import json
import subprocess
import sys

import pytest

from pircheck.cli import main

from conftest import corpus

HANDOFF = str(corpus("handoff.pir"))
NO_WAIT = str(corpus("errors", "handoff_no_wait.pir"))
K = lambda name: str(corpus("kernels", f"{name}.pir"))


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("argv, code", [
    (["check", HANDOFF], 0),
    (["check", NO_WAIT], 2),
    (["check", str(corpus("errors", "deadlock_single.pir"))], 2),
    (["check", "/nonexistent/x.pir"], 1),
    (["equiv", K("matmul16"), K("matmul16_tiled4")], 0),
    (["equiv", K("elementwise_ab"), K("elementwise_ba")], 3),
    (["equiv", "--ac", K("elementwise_ab"), K("elementwise_ba")], 0),
    (["equiv", NO_WAIT, HANDOFF], 2),
    (["fuzz", "--mode", "exhaustive", str(corpus("conc", "fork_join.pir"))], 0),
    (["stats", K("matmul16")], 0),
    (["dot", K("fw16"), K("fw16_ktiled")], 3),
    (["dot", HANDOFF], 0),
])
def test_exit_codes(capsys, argv, code):
    assert run(capsys, *argv)[0] == code


@pytest.mark.parametrize("argv", [
    [],
    ["check"],
    ["check", HANDOFF, HANDOFF],
    ["equiv", HANDOFF],
    ["check", "--format", "xml", HANDOFF],
    ["frobnicate", HANDOFF],
])
def test_usage_errors_exit_64(capsys, argv):
    try:
        code = main(argv)
    except SystemExit as e:  # argparse exits from inside parse_args
        code = e.code
    assert code == 64


def test_dot_with_three_files_is_usage(capsys):
    assert run(capsys, "dot", HANDOFF, HANDOFF, HANDOFF)[0] == 64


def test_parse_error_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.pir"
    bad.write_text("x[0] = (1;\n")
    code, _, err = run(capsys, "check", str(bad))
    assert code == 1 and "bad.pir:1:" in err


def test_bad_rule_file_exit_1(tmp_path, capsys):
    rules = tmp_path / "r.rules"
    rules.write_text("+($x, $y) => 0\n")
    code, _, err = run(capsys, "equiv", "--rules", str(rules), HANDOFF, HANDOFF)
    assert code == 1 and "line 1" in err


def test_rule_file_is_applied(tmp_path, capsys):
    rules = tmp_path / "r.rules"
    rules.write_text("*($x, B[0][0]) => 7  # touches a single cell\n")
    code, out, _ = run(capsys, "equiv", "--rules", str(rules),
                       K("elementwise_ab"), K("elementwise_ba"))
    assert code == 3 and "rule fired" in out and "*($x, B[0][0]) => 7" in out


def test_ac_pattern_with_repeated_root_kind_is_rejected(tmp_path, capsys):
    rules = tmp_path / "r.rules"
    rules.write_text("*(A[0][0], B[0][0]) => 0\n")
    code, _, err = run(capsys, "equiv", "--rules", str(rules), HANDOFF, HANDOFF)
    assert code == 1 and "distinct root kinds" in err


def test_check_reports_race_lines(capsys):
    code, out, _ = run(capsys, "check", NO_WAIT)
    assert code == 2
    assert "Race" in out and "A[0]" in out
    assert "line 7" in out and "line 11" in out


def test_check_json_round_trips(capsys):
    code, out, _ = run(capsys, "check", "--format", "json", "--paranoid", "--memory", "--trace-sem", NO_WAIT)
    d = json.loads(out)
    assert json.loads(json.dumps(d)) == d
    assert d["status"] == "error" and d["error"]["category"] == "Race"
    assert d["error"]["item"] == 1 and d["paranoid_items"] == [1]
    assert sorted(w["line"] for w in d["error"]["witnesses"]) == [7, 11]


def test_check_text_shows_trace_and_memory(capsys):
    code, out, _ = run(capsys, "check", "--memory", "--trace-sem", HANDOFF)
    assert code == 0
    assert "0 A[0] = *(+(A[0],1),2)" in out
    assert "semaphore trace:" in out and "set(sems[0], 1)" in out


@pytest.mark.parametrize("a, b", [("matmul16", "matmul16_tiled4"), ("fw16", "fw16_ktiled")])
@pytest.mark.parametrize("fmt", ["text", "json"])
def test_equiv_reports_identical_without_timing(capsys, a, b, fmt):
    args = ["equiv", "--no-timing", "--format", fmt, K(a), K(b)]
    first = run(capsys, *args)
    second = run(capsys, *args)
    assert first == second
    assert "t_eq" not in first[1] and "t_int" not in first[1]


def test_equiv_json_has_timing_split(capsys):
    code, out, _ = run(capsys, "equiv", "--format", "json", HANDOFF, HANDOFF)
    d = json.loads(out)
    assert code == 0 and d["status"] == "Equivalent"
    assert {"t_int_a", "t_int_b", "t_eq"} <= set(d)


def test_equiv_dot_file(tmp_path, capsys):
    pydot = pytest.importorskip("pydot")
    dot = tmp_path / "diff.dot"
    code, out, _ = run(capsys, "equiv", "--dot", str(dot), K("fw16"), K("fw16_ktiled"))
    assert code == 3 and "first difference" in out
    assert pydot.graph_from_dot_data(dot.read_text())


def test_stats_sequential_kernel(capsys):
    code, out, _ = run(capsys, "stats", "--no-timing", K("gemm"))
    d = json.loads(out)
    assert code == 0 and d["hb_rat"] == 0 and d["nb_conc"] == 0
    assert "t_int" not in d


def test_fuzz_handoff(capsys):
    code, out, _ = run(capsys, "fuzz", "--seeds", "4", HANDOFF)
    assert code == 0
    assert out.startswith("1 distinct outcome across ")


def test_fuzz_divergence_report(tmp_path, capsys):
    report = tmp_path / "div.json"
    code, out, _ = run(capsys, "fuzz", "--fault", "no_read_check", "--shrink", "--limit", "500",
                       "--seeds", "16", "--report", str(report), str(corpus("faults", "shrink_demo.pir")))
    assert code == 4
    d = json.loads(report.read_text())
    assert d["distinct_outcomes"] == 2
    assert len(d["reproducer"].splitlines()) <= 10


def test_output_file(tmp_path, capsys):
    target = tmp_path / "out.txt"
    code, out, _ = run(capsys, "check", "-o", str(target), HANDOFF)
    assert code == 0 and out == ""
    assert target.read_text().startswith("ok: ")


def test_budget_env(monkeypatch, capsys):
    monkeypatch.setenv("PIRCHECK_STEP_BUDGET", "100")
    code, out, _ = run(capsys, "check", str(corpus("errors", "endless.pir")))
    assert code == 2 and "BudgetExceeded" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "pircheck", "check", HANDOFF],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("ok: ")
