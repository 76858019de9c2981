import json
import os
import subprocess
import sys

import numpy as np
import pytest

from slhjb import cli
from slhjb.interpolation import read_field_csv
from slhjb.solver import SolverError


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_solve_test1_exact(tmp_path):
    assert run("solve", "--problem", "test1", "--nu", "0", "--dx", "0.01", "--cfl", "1",
               "--out", tmp_path) == 0
    X, v = read_field_csv(tmp_path / "fields" / "test1_t0.csv")
    interior = (X[:, 0] > 0) & (X[:, 0] < 1)
    assert np.all(v[interior] == 0)
    summary = json.loads((tmp_path / "reports" / "solve_test1.json").read_text())
    assert summary["n_steps"] == 100 and summary["nodes"] == 101
    assert summary["config"]["cfl"] == 1.0 and "diagonal" in summary["config"]


def test_solve_test4_stability(tmp_path):
    assert run("solve", "--problem", "test4", "--dx", "0.02828", "--cfl", "1", "--out", tmp_path) == 0
    s = json.loads((tmp_path / "reports" / "solve_test4.json").read_text())
    assert s["max_abs_value"] <= 100 + 5 * 40.5
    assert s["stability_bound"] == pytest.approx(100 + 5 * 40.5)


def test_solve_report_times_and_nx(tmp_path):
    assert run("solve", "--problem", "test3", "--nx", "8", "--times", "0,0.75,1.5",
               "--out", tmp_path) == 0
    names = sorted(p.name for p in (tmp_path / "fields").iterdir())
    assert names == ["test3_t0.75.csv", "test3_t0.csv", "test3_t1.5.csv"]
    X, v = read_field_csv(tmp_path / "fields" / "test3_t1.5.csv")
    assert np.allclose(v, -2 * np.minimum(np.minimum(X[:, 0], 1 - X[:, 0]),
                                          np.minimum(2 * X[:, 1], 2 - 2 * X[:, 1])))


def test_solve_mesh_file(tmp_path):
    from slhjb.geometry import build_disk_mesh, save_mesh
    save_mesh(build_disk_mesh(1.0, 0.5), tmp_path / "disk.mesh")
    assert run("solve", "--problem", "test2", "--mesh", tmp_path / "disk.mesh", "--dt", "0.25",
               "--out", tmp_path) == 0


def test_missing_problem_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run("solve", "--dx", "0.1")
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ("solve", "--problem", "test1", "--dt", "0.1", "--cfl", "1"),
    ("solve", "--problem", "test1", "--levels", "3"),
])
def test_argparse_errors(argv):
    with pytest.raises(SystemExit) as exc:
        run(*argv)
    assert exc.value.code == 2


@pytest.mark.parametrize("extra", [("--problem", "test2", "--nu", "0.1"),
                                   ("--problem", "test2", "--nx", "4"),
                                   ("--problem", "test1", "--dx", "-0.1"),
                                   ("--problem", "test1", "--times", "2"),
                                   ("--problem", "test3", "--sigma-off")])
def test_config_errors(tmp_path, extra, capsys):
    assert run("solve", *extra, "--out", tmp_path) == 2
    assert capsys.readouterr().err.startswith("slhjb solve:")


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("solve", "--problem", "test1", "--dx", "0.1", "--out", blocker) == 2


def test_solver_error_exit_code(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise SolverError("non-finite value at time level k=3, node i=7")
    monkeypatch.setattr(cli, "solve", boom)
    assert run("solve", "--problem", "test1", "--dx", "0.1", "--out", tmp_path) == 3
    assert "k=3, node i=7" in capsys.readouterr().err


def test_converge_levels(tmp_path):
    assert run("converge", "--problem", "test3", "--levels", "2", "--dx0", "0.25", "--cfl", "1",
               "--controls", "11", "--out", tmp_path) == 0
    lines = (tmp_path / "reports" / "converge_test3_cfl1.csv").read_text().splitlines()
    assert lines[0] == "dx,dt,nodes,err_linf,order,seconds" and len(lines) == 3
    assert run("converge", "--problem", "test3", "--levels", "1", "--dx0", "0.25",
               "--controls", "11", "--out", tmp_path) == 0
    lines = (tmp_path / "reports" / "converge_test3_cfl1.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1].split(",")[4] == ""
    d = json.loads((tmp_path / "reports" / "converge_test3_cfl1.json").read_text())
    assert d["cfl"] == 1.0 and d["controls"]["counts"] == [11, 11]


def test_converge_without_exact(tmp_path):
    assert run("converge", "--problem", "test4", "--out", tmp_path) == 2


def test_check_passes_and_fault_fails(tmp_path, capsys):
    base = ("check", "--problem", "test1", "--nu", "0.1", "--dx", "0.1", "--pairs", "50",
            "--dx0", "0.025", "--halvings", "1", "--out", tmp_path)
    assert run(*base) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 8 and "[FAIL]" not in out
    assert run(*base, "--inject-fault") == 1
    out = capsys.readouterr().out
    assert "[FAIL] monotonicity" in out
    assert "inject" not in subprocess.run([sys.executable, "-m", "slhjb", "check", "--help"],
                                          capture_output=True, text=True).stdout


def test_trajectories_sigma_off_and_repeatable(tmp_path):
    args = ("trajectories", "--sigma-off", "--dx", "0.1", "--seeds", "0,1")
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    ta, tb = tmp_path / "a" / "trajectories", tmp_path / "b" / "trajectories"
    for i in range(1, 7):
        assert (ta / f"P{i}_seed0.csv").read_bytes() == (ta / f"P{i}_seed1.csv").read_bytes()
        assert (ta / f"P{i}_seed0.csv").read_bytes() == (tb / f"P{i}_seed0.csv").read_bytes()
    s = json.loads((ta / "summary.json").read_text())
    assert s["count"] == 12 and s["config"]["seeds"] == [0, 1]


def test_trajectories_random_repeatable(tmp_path):
    args = ("trajectories", "--dx", "0.1", "--seeds", "3", "--starts", "0.1,0.1;-0.5,0.2")
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    for name in ("P1_seed3.csv", "P2_seed3.csv"):
        assert (tmp_path / "a" / "trajectories" / name).read_bytes() == \
            (tmp_path / "b" / "trajectories" / name).read_bytes()


def test_trajectories_rejects_other_problem(tmp_path):
    assert run("trajectories", "--problem", "test2", "--out", tmp_path) == 2
    assert run("trajectories", "--starts", "2,0", "--dx", "0.1", "--out", tmp_path) == 2


def test_workers_env(tmp_path, monkeypatch):
    monkeypatch.setenv("HJB_SL_WORKERS", "1")
    assert run("solve", "--problem", "test1", "--dx", "0.1", "--out", tmp_path) == 0
    s = json.loads((tmp_path / "reports" / "solve_test1.json").read_text())
    assert s["config"]["workers"] == 1
    monkeypatch.setenv("HJB_SL_WORKERS", "many")
    assert run("solve", "--problem", "test1", "--dx", "0.1", "--out", tmp_path) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "slhjb", "solve", "--problem", "test1",
                           "--dx", "0.1", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "test1: N=10" in proc.stdout
