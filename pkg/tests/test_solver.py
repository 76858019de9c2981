import math

import numpy as np
import pytest

from slhjb.analysis import data_bounds
from slhjb.geometry import build_disk_mesh, build_rect_grid
from slhjb.operator import Problem
from slhjb.problems import builtin, control_grid
from slhjb.solver import SolverError, evaluate, gradient, solve, time_steps
from slhjb.interpolation import ValueField


def test_zero_data_gives_zero():
    spec = builtin("test3")
    prob = Problem(spec.problem.domain, 1.0, spec.problem.drift, spec.problem.diffusion,
                   lambda t, X: np.zeros(X.shape[0]), spec.problem.controls)
    sol = solve(prob, build_rect_grid(((0, 1), (0, 1)), 5, 5), 0.1, keep="all")
    assert all(np.all(v == 0) for v in sol.levels.values())


def test_time_step_adjustment():
    assert time_steps(1.5, 0.04) == (38, 1.5 / 38)
    assert time_steps(1.0, 0.01)[0] == 100
    with pytest.raises(ValueError):
        time_steps(1.0, 0.0)
    spec = builtin("test3")
    sol = solve(spec.problem, spec.make_mesh(0.25), 0.2)
    assert sol.info["dt_adjusted"] and sol.n_steps == 8 and sol.dt == 1.5 / 8
    sol = solve(spec.problem, spec.make_mesh(0.25), 0.25)
    assert not sol.info["dt_adjusted"]


def test_test1_exact():
    spec = builtin("test1", {"nu": 0.0})
    mesh = spec.make_mesh(0.01)
    sol = solve(spec.problem, mesh, 0.01, keep="all")
    assert np.max(np.abs(sol.v0[mesh.interior])) <= 1e-12
    left = int(np.argmin(mesh.vertices[:, 0]))
    for k in range(sol.n_steps + 1):
        assert sol.levels[k][left] == 1.0 - k * sol.dt


@pytest.mark.parametrize("name,dx,dt", [("test1", 0.05, 0.05), ("test2", 0.25, 0.125),
                                        ("test3", 0.1, 0.1), ("test4", 0.2, 0.2)])
def test_boundary_and_stability_invariants(name, dx, dt):
    spec = builtin(name, {"nu": 0.1} if name == "test1" else {})
    mesh = spec.make_mesh(dx)
    sol = solve(spec.problem, mesh, dt, keep="all")
    X, bnd = mesh.vertices, mesh.boundary_nodes
    assert np.array_equal(sol.levels[sol.n_steps], spec.problem.boundary_cost(sol.horizon, X))
    for k in range(sol.n_steps):
        assert np.array_equal(sol.levels[k][bnd], spec.problem.boundary_cost(k * sol.dt, X[bnd]))
    psi, fmax = data_bounds(spec.problem, mesh, sol.dt)
    assert max(np.abs(v).max() for v in sol.levels.values()) <= psi + spec.problem.horizon * fmax


def test_raising_psi_raises_values():
    spec = builtin("test1", {"nu": 0.1})
    mesh = spec.make_mesh(0.05)
    base = solve(spec.problem, mesh, 0.05, keep="all")
    psi = spec.problem.boundary_cost
    raised = spec.problem.with_boundary_cost(lambda t, X: psi(t, X) + 0.1 * (X[:, 0] > 0.5))
    up = solve(raised, mesh, 0.05, keep="all")
    for k in base.levels:
        assert np.all(up.levels[k] >= base.levels[k])


def test_deterministic_and_worker_independent():
    spec = builtin("test2")
    mesh = spec.make_mesh(0.25)
    a = solve(spec.problem, mesh, 0.125, keep="all", workers=1)
    b = solve(spec.problem, mesh, 0.125, keep="all")
    for k in a.levels:
        assert np.array_equal(a.levels[k], b.levels[k])


def test_keep_and_controls():
    spec = builtin("test3")
    sol = solve(spec.problem, spec.make_mesh(0.25), 0.25, keep=[0.0, 0.6], store_controls=True)
    assert sorted(sol.levels) == [0, 2]
    cf = sol.control_field(0)
    assert np.all(np.isnan(cf[sol.mesh.boundary_nodes]))
    assert np.all(np.isfinite(cf[sol.mesh.interior]))
    with pytest.raises(KeyError):
        sol.level(3)


def test_refine_never_worse():
    spec = builtin("test3", {"controls": 5})
    mesh = spec.make_mesh(0.125)
    coarse = solve(spec.problem, mesh, 0.125)
    fine = solve(spec.problem, mesh, 0.125, refine=True)
    assert np.all(fine.v0 <= coarse.v0 + 1e-15)


def test_non_finite_aborts():
    spec = builtin("test1", {"nu": 0.1})
    bad = spec.problem.with_boundary_cost(
        lambda t, X: np.where(np.asarray(t) < 0.5, np.nan, 0.0) * np.ones(X.shape[0]))
    with pytest.raises(SolverError, match=r"k=\d+, node i=\d+"):
        solve(bad, spec.make_mesh(0.1), 0.1)


def test_evaluate_floor_rule():
    spec = builtin("test1", {"nu": 0.1})
    mesh = spec.make_mesh(0.1)
    sol = solve(spec.problem, mesh, 0.1, keep="all")
    assert evaluate(sol, 0.3, mesh.vertices[4]) == sol.levels[3][4]
    x = np.array([0.43])
    vals = {evaluate(sol, t, x) for t in (0.3, 0.31, 0.35, 0.3999)}
    assert len(vals) == 1
    assert evaluate(sol, 1.0, x) == pytest.approx(float(spec.problem.boundary_cost(1.0, x[None])[0]))
    with pytest.raises(ValueError):
        evaluate(sol, 1.5, x)


def _fake_solution(mesh, values, spec):
    sol = solve(spec.problem, mesh, spec.problem.horizon)
    sol.levels[0] = values
    return sol


def test_gradient_affine_and_symmetric():
    spec = builtin("test3")
    mesh = spec.make_mesh(0.05)
    sol = _fake_solution(mesh, mesh.vertices @ np.array([0.3, -2.0]) + 1.0, spec)
    assert np.allclose(gradient(sol, 0.0, [0.4, 0.55]), [0.3, -2.0], atol=1e-10)
    sym = (mesh.vertices[:, 0] - 0.5) ** 2
    sol.levels[0] = sym
    assert abs(gradient(sol, 0.0, [0.5, 0.3])[0]) <= 1e-12
    with pytest.raises(ValueError):
        gradient(sol, 0.0, [0.02, 0.5])


def test_gradient_first_order_on_disk():
    spec = builtin("test2")
    errs = []
    x = np.array([0.2, -0.1])
    exact = 0.5 * np.array([math.cos(x[0]) * math.sin(x[1]), math.sin(x[0]) * math.cos(x[1])])
    for h in (0.25, 0.125, 0.0625):
        mesh = build_disk_mesh(1.0, h)
        sol = _fake_solution(mesh, 0.5 * np.sin(mesh.vertices[:, 0]) * np.sin(mesh.vertices[:, 1]), spec)
        errs.append(np.abs(gradient(sol, 0.0, x) - exact).max())
    assert errs[-1] < errs[0] / 2
    assert errs[-1] < 0.05
