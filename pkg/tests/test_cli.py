import json
import subprocess
import sys

import pytest

from idae.cli import bundled_systems, resolve_system_path, run_command


def run_json(capsys, argv):
    code = run_command(argv)
    return code, json.loads(capsys.readouterr().out)


def test_analyze_zolf(capsys):
    code, rep = run_json(capsys, ["analyze", "zolf.idae", "--point", "zolf.points.json"])
    assert code == 0
    assert rep["schema"] == 1
    assert rep["signature"]["combined"] == [[0, 0], [-1, -1]]
    # -inf entries are encoded as null
    assert rep["signature"]["dae"] == [[0, 0], [None, None]]
    assert rep["offsets"]["c"] == [0, 1] and rep["offsets"]["d"] == [0, 0]
    assert rep["dof"] == 3
    comp = rep["components"][0]
    assert comp["method"] == "IRE" and comp["final_dof"] == 2


def test_analyze_pendulum_without_points_reports_witness_error(capsys):
    code, rep = run_json(capsys, ["analyze", "pendulum.idae"])
    assert code == 0
    assert "not polynomial" in rep["witness_error"]
    assert rep["dof"] == 5


def test_reduce_pendulum_with_points(capsys):
    code = run_command(["reduce", "pendulum.idae", "--point", "pendulum.points.json"])
    out = capsys.readouterr().out
    assert code == 0
    assert "var x1, x2, x3, x4, x5, u1, u2, u3, u4" in out


def test_witness_drive(capsys):
    code, rep = run_json(capsys, ["witness", "drive2.idae", "--seed", "7"])
    assert code == 0
    assert [c["rank"] for c in rep["components"]] == [4, 3, 3, 2]
    assert rep["blocks"][0]["paths"] == 4


def test_solve_drive_writes_traces(tmp_path, capsys):
    code = run_command(["solve", "drive2.idae", "--traces", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "Pryce" in out and "IRE" in out
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["drive2-component0.csv", "drive2-component1.csv", "drive2-component2.csv",
                     "drive2-component3.csv", "drive2-summary.json"]
    summary = json.loads((tmp_path / "drive2-summary.json").read_text())
    assert [r["status"] for r in summary["solve"]][:2] == ["ok", "ok"]


def test_solve_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    run_command(["solve", "drive2.idae", "--traces", str(a), "--seed", "3"])
    run_command(["solve", "drive2.idae", "--traces", str(b), "--seed", "3"])
    capsys.readouterr()
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_report_file(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run_command(["analyze", "drive1.idae", "--report", str(out)]) == 0
    assert capsys.readouterr().out == ""
    assert json.loads(out.read_text())["offsets"]["c"] == [0, 2]


def test_check_subcommand(capsys):
    assert run_command(["check"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out


def test_missing_file_exit_code(capsys):
    code, rep = run_json(capsys, ["analyze", "no-such-system.idae"])
    assert code == 1
    assert rep["error"]["kind"] == "input"


def test_structural_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.idae"
    bad.write_text("system bad { time t from 0; var x, y; eq x + y = 0; eq x - y = 0; }")
    code = run_command(["analyze", str(bad)])
    capsys.readouterr()
    assert code == 0
    singular = tmp_path / "singular.idae"
    singular.write_text("system s { time t from 0; var x, y; eq x = 0; eq sin(t) = 0; }")
    code, rep = run_json(capsys, ["analyze", str(singular)])
    assert code == 2
    assert rep["error"]["kind"] == "structural" and rep["error"]["phase"] == 1


def test_syntax_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.idae"
    bad.write_text("system bad { time t from 0; var x; eq x + = 0; }")
    code, rep = run_json(capsys, ["analyze", str(bad)])
    assert code == 1 and "line 1" in rep["error"]["message"]


def test_usage_error():
    assert run_command(["frobnicate"]) == 1


def test_bundled_lookup():
    assert {p.stem for p in bundled_systems()} == {"drive1", "drive2", "nonlinear-degenerate", "pendulum", "zolf"}
    with pytest.raises(FileNotFoundError):
        resolve_system_path("missing.idae")


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "idae.cli", "analyze", "drive1.idae"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["dof"] == 2


def test_possible_redundancy_is_flagged(capsys):
    code, rep = run_json(capsys, ["analyze", "nonlinear-degenerate.idae", "--point",
                                  "nonlinear-degenerate.points.json"])
    assert code == 0
    # the integral constraint is identically satisfied at t0
    assert rep["components"][0]["possible_redundancy"] == [{"block": 0, "equations": ["F2"]}]
    assert rep["blocks"][0]["smoothing_integrals"] == ["x^(-1)", "y^(-1)"]
    assert rep["dof"] == 3
