from __future__ import annotations

import csv
import json
import subprocess
import sys
from dataclasses import replace

import pytest

from cellopt.cli import BenchRow, bench_row, main
from cellopt.io import parse_instance, read_instance, serialize_instance
from conftest import fixture_path


def run(*argv):
    return main([str(a) for a in argv])


def test_generate_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("generate", "--preset", "s5", "--seed", 1, "-o", a) == 0
    assert run("generate", "--preset", "s5", "--seed", 1, "-o", b) == 0
    assert a.read_bytes() == b.read_bytes()
    assert "5 robots" in capsys.readouterr().out


def test_generate_large_preset_and_config(tmp_path, capsys):
    out = tmp_path / "l.json"
    assert run("generate", "--preset", "l12", "-o", out) == 0
    assert len(read_instance(out).robots) == 12
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"robot_count": 3, "activities_per_robot": [2, 3]}))
    assert run("generate", "--config", cfg, "--seed", 4, "-o", out) == 0
    assert len(read_instance(out).robots) == 3
    cfg.write_text(json.dumps({"robots": 3}))
    assert run("generate", "--config", cfg, "-o", out) == 1
    cfg.write_text(json.dumps({"robot_count": 0}))
    assert run("generate", "--config", cfg, "-o", out) == 1
    assert "error:" in capsys.readouterr().err


def test_validate(tmp_path, capsys):
    assert run("validate", fixture_path("example_cell")) == 0
    data = json.loads(open(fixture_path("example_cell"), "rb").read())
    data["cycle_time"] = -1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    assert run("validate", bad) == 1
    assert "cycle_time" in capsys.readouterr().out
    assert run("validate", tmp_path / "missing.json") == 1
    (tmp_path / "junk.json").write_text("{")
    assert run("validate", tmp_path / "junk.json") == 1


def test_optimize_then_check(tmp_path, capsys):
    sol, prog = tmp_path / "tiny.sol.json", tmp_path / "progress.csv"
    code = run("optimize", fixture_path("tiny"), "--deterministic", "--eval-budget", 2000, "-o", sol,
               "--progress", prog)
    assert code == 0
    report = json.loads((tmp_path / "tiny.sol.report.json").read_text())
    assert "wall_time" not in report and report["best_energy"] > 0
    rows = list(csv.reader(prog.open()))
    assert rows[0] == ["time_s", "energy_J", "worker_id"]
    energies = [float(r[1]) for r in rows[1:]]
    assert energies == sorted(energies, reverse=True)
    assert energies[-1] == pytest.approx(report["best_energy"])
    assert run("check", fixture_path("tiny"), sol) == 0

    data = json.loads(sol.read_text())
    tampered = tmp_path / "tampered.json"
    text = sol.read_text()
    data["robots"][0]["steps"][1]["start"] += 0.37
    tampered.write_text(json.dumps(data))
    capsys.readouterr()
    assert run("check", fixture_path("tiny"), tampered) == 2
    assert "[timing]" in capsys.readouterr().out
    assert text == sol.read_text()


def test_optimize_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}.json"
        assert run("optimize", fixture_path("tiny"), "--deterministic", "--threads", 1, "--seed", 7,
                   "--eval-budget", 1500, "-o", out) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_optimize_infeasible_exit_code(tmp_path, capsys):
    assert run("optimize", fixture_path("infeasible"), "--deterministic", "-o", tmp_path / "x.json") == 3
    assert "exhaustive enumeration" in capsys.readouterr().out
    assert not (tmp_path / "x.json").exists()


def test_threads_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("CELLOPT_THREADS", "many")
    assert run("optimize", fixture_path("tiny"), "--time-limit", 1) == 1
    monkeypatch.setenv("CELLOPT_THREADS", "2")
    assert run("optimize", fixture_path("tiny"), "--deterministic") == 1     # deterministic needs one worker


def test_export_and_bound(tmp_path, capsys):
    lp = tmp_path / "cell.lp"
    assert run("export", fixture_path("example_cell"), "-o", lp) == 0
    assert lp.read_text().startswith("\\ cellopt cell model")
    capsys.readouterr()

    inst = read_instance(fixture_path("example_cell"))
    solo = replace(inst, robots=inst.robots[:1], time_lags=(), compat_pairs=(), collisions=())
    path = tmp_path / "solo.json"
    path.write_bytes(serialize_instance(solo))
    assert run("bound", path) == 0
    out = capsys.readouterr().out
    assert "r1:" in out and "(exact" in out and "total:" in out
    assert run("bound", fixture_path("infeasible")) == 3


def test_bench_csv(tmp_path):
    for seed in range(3):
        assert run("generate", "--preset", "tiny", "--seed", seed, "-o", tmp_path / f"t{seed}.json") == 0
    out = tmp_path / "bench.csv"
    assert run("bench", str(tmp_path / "t*.json"), "--runs", 2, "--deterministic", "--eval-budget", 400,
               "-o", out) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 3
    assert list(rows[0]) == [f for f in BenchRow.__dataclass_fields__]
    for r in rows:
        if int(r["feasible_runs"]):
            assert float(r["best"]) <= float(r["avg"]) <= float(r["worst"])
            assert float(r["lower_bound"]) <= float(r["best"]) + 1e-6
    assert run("bench", str(tmp_path / "none*.json"), "-o", out) == 1


def test_bench_row_statistics():
    row = bench_row("x", [10.0, None, 12.0], 9.0, 1.0)
    assert (row.best, row.avg, row.worst, row.feasible_runs) == (10.0, 11.0, 12.0, 2)
    assert row.gap_percent == pytest.approx(100 / 9)


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "cellopt.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("generate", "validate", "optimize", "export", "bound", "check", "bench"):
        assert cmd in res.stdout
