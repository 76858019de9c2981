import json

import numpy as np
import pytest

import oracles
from slhjb.problems import builtin
from slhjb.solver import solve
from slhjb.trajectories import (GaussianStream, batch_summary, project_unit_ball, simulate,
                                simulate_batch, write_batch_summary)


@pytest.fixture(scope="module")
def room():
    spec = builtin("test4")
    sol = solve(spec.problem, spec.make_mesh(0.1), 0.1, keep="all", store_controls=True)
    return spec, sol


@pytest.fixture(scope="module")
def still_room():
    spec = builtin("test4", {"sigma": False})
    sol = solve(spec.problem, spec.make_mesh(0.1), 0.1, keep="all")
    return spec, sol


@pytest.mark.parametrize("z,out", [((0.3, -0.4), (0.3, -0.4)), ((2.0, 0.0), (1.0, 0.0)),
                                   ((0.0, 0.0), (0.0, 0.0))])
def test_project_unit_ball(z, out):
    assert np.allclose(project_unit_ball(z), out, atol=1e-15)


def test_normal_stream_moments():
    g = GaussianStream(2024)
    draws = g.normals(100_000)
    mean, var = oracles.sample_normal_moments(draws)
    assert abs(mean) <= 4 / np.sqrt(1e5)
    assert abs(var - 1) <= 4 * np.sqrt(2 / 1e5)
    again = GaussianStream(2024).normals(10)
    assert np.array_equal(again, draws[:10])


def test_same_seed_bit_identical(room, tmp_path):
    spec, sol = room
    a = simulate(sol, spec.problem, spec.starts[0], seed=5, labeler=spec.labeler)
    b = simulate(sol, spec.problem, spec.starts[0], seed=5, labeler=spec.labeler)
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_record_invariants(room):
    spec, sol = room
    dom = spec.problem.domain
    for seed in range(3):
        for x0 in spec.starts:
            r = simulate(sol, spec.problem, x0, seed=seed, labeler=spec.labeler)
            steps = np.diff(r.times)
            assert np.all(steps > 0)
            assert np.allclose(steps[:-1], sol.dt / 2, rtol=0, atol=1e-12)
            if r.status == "exited":
                assert np.all(dom.inside(r.positions[:-1]))
                assert abs(dom.signed_distance(r.exit_point[None])[0]) <= 1e-10
                assert r.label in ("G1", "G2", "Gw")
                assert r.terminal_cost == {"G1": 0.0, "G2": 0.2, "Gw": 100.0}[r.label]
            else:
                assert r.times[-1] == pytest.approx(spec.problem.horizon)


def test_sigma_off_ignores_seed(still_room):
    spec, sol = still_room
    recs = [simulate(sol, spec.problem, spec.starts[2], seed=s) for s in (0, 1, 99)]
    for r in recs[1:]:
        assert np.array_equal(r.positions, recs[0].positions)
    assert recs[0].extra["normals_drawn"] == 0


def test_distance_field_moves_at_unit_speed(still_room):
    # distance to the left wall: P1 reproduces it, so -grad V is exactly (-1, 0)
    spec, sol = still_room
    cone = sol.mesh.vertices[:, 0] + 1.0
    fake = type(sol)(sol.mesh, sol.problem, sol.dt, sol.n_steps,
                     {k: cone for k in sol.levels}, {}, {})
    r = simulate(fake, spec.problem, [0.5, 0.0], seed=0, labeler=spec.labeler)
    step = np.linalg.norm(np.diff(r.positions, axis=0), axis=1)
    assert np.allclose(step[:-1], sol.dt / 2, rtol=1e-9)
    assert np.all(np.abs(r.positions[:, 1]) <= 1e-14)
    assert r.label == "G1"


def test_argmin_feedback(room):
    spec, sol = room
    r = simulate(sol, spec.problem, spec.starts[4], seed=0, feedback="argmin", labeler=spec.labeler)
    assert r.status in ("exited", "horizon")
    bare = solve(spec.problem, sol.mesh, 0.1, keep="all")
    with pytest.raises(ValueError):
        simulate(bare, spec.problem, spec.starts[0], feedback="argmin")


def test_rejects_boundary_start(room):
    spec, sol = room
    with pytest.raises(ValueError):
        simulate(sol, spec.problem, [-1.0, 0.0])


def test_csv_and_summary(room, tmp_path):
    spec, sol = room
    recs = simulate_batch(sol, spec.problem, spec.starts[:2], [0, 1], labeler=spec.labeler)
    recs[0].write_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "t,x1,x2"
    assert lines[-1].startswith("# status=")
    assert len(lines) == recs[0].times.size + 2
    write_batch_summary(recs, tmp_path / "s.json")
    d = json.load(open(tmp_path / "s.json"))
    assert d["count"] == 4 and sum(d["by_outcome"].values()) == 4
    assert batch_summary(recs)["trajectories"][0]["seed"] == 0
