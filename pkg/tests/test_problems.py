import math

import numpy as np
import pytest

import oracles
from slhjb.problems import NAMES, builtin, control_grid, door_label, pde_residual_test2


def test_registry():
    assert NAMES == ("test1", "test2", "test3", "test4")
    with pytest.raises(ValueError):
        builtin("test5")
    with pytest.raises(ValueError):
        builtin("test1", {"nu": -1})


def test_exact_callbacks_present():
    assert builtin("test1", {"nu": 0}).exact is not None
    assert builtin("test1", {"nu": 0.1}).exact is None
    assert builtin("test2").exact is not None
    assert builtin("test3").exact is not None
    assert builtin("test4").exact is None
    assert builtin("test4").theory_covered is False


def test_test1_exact_values():
    spec = builtin("test1", {"nu": 0})
    X = np.array([[0.0], [1e-9], [0.5], [1.0]])
    assert list(spec.exact(X)) == [oracles.test1_exact(x) for x in X[:, 0]]
    psi = spec.problem.boundary_cost
    assert psi(0.3, np.array([[0.0]]))[0] == pytest.approx(0.7)
    assert psi(0.3, np.array([[1.0]]))[0] == 0.0
    assert np.all(psi(1.0, np.linspace(0, 1, 5)[:, None]) == 0)


def test_test2_exact_center_and_data():
    spec = builtin("test2")
    assert spec.exact(np.array([[0.0, 0.0]]))[0] == 0.0
    X = np.random.default_rng(0).uniform(-0.7, 0.7, (20, 2))
    assert np.allclose(spec.exact(X), [oracles.test2_exact_t0(*x) for x in X], atol=1e-15)
    assert np.allclose(spec.problem.boundary_cost(0.0, X), spec.exact(X), atol=1e-15)


def test_pde_residual_test2_vanishes():
    rng = np.random.default_rng(1)
    r = np.sqrt(rng.uniform(0, 1, 1000))
    th = rng.uniform(0, 2 * np.pi, 1000)
    X = np.column_stack([r * np.cos(th), r * np.sin(th)])
    t = rng.uniform(0, 1, 1000)
    assert np.max(np.abs(pde_residual_test2(t, X))) <= 1e-8


def test_test3_reference():
    spec = builtin("test3")
    (x, y), expected = oracles.TEST3_PSI_AT
    assert spec.exact(np.array([[x, y]]))[0] == expected == oracles.test3_psi(x, y)
    X = np.random.default_rng(2).uniform(0, 1, (50, 2))
    assert np.allclose(spec.exact(X), [oracles.test3_psi(*p) for p in X])
    assert np.allclose(spec.problem.boundary_cost(1.5, X), -2 * spec.exact(X))
    assert np.all(spec.problem.boundary_cost(0.2, X) == 0)
    A = np.array([[2.0, -1.0]])
    assert spec.problem.running_cost(0.0, X[:1], A)[0] == 1 + 1 + 1


def test_test4_data():
    spec = builtin("test4")
    P = np.array([[-1, 0.1], [1, -0.2], [1, 0.3], [0.2, 0.5], [-1, -0.21]])
    assert list(door_label(P)) == ["G1", "G2", "Gw", "Gw", "Gw"]
    assert list(spec.problem.boundary_cost(1.0, P)) == [0.0, 0.2, 100.0, 100.0, 100.0]
    assert np.all(spec.problem.boundary_cost(5.0, P) == 0)
    S = spec.problem.diffusion(0.0, np.array([[0.0, 0.0], [0.5, 0.0]]), np.zeros((2, 2)))
    assert S[0, 0, 0] == pytest.approx(1.6) and np.all(S[0, :, 1] == 0) and np.all(S[1] == 0)
    assert spec.problem.running_cost(0, np.zeros((1, 2)), np.array([[1.0, 0.0]]))[0] == 40.5
    assert spec.starts.shape == (6, 2)
    assert np.all(builtin("test4", {"sigma": False}).problem.diffusion(0.0, np.zeros((1, 2)), np.zeros((1, 2))) == 0)


def test_control_grid_examples():
    box = control_grid({"kind": "box", "lo": [-1], "hi": [1], "counts": [3]})
    assert box.points[:, 0].tolist() == [-1.0, 0.0, 1.0]
    disk = control_grid({"kind": "disk", "radius": 1.0, "rings": 1, "angles": 4})
    assert disk.points.tolist() == [[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1]]
    sq = control_grid({"kind": "box", "lo": [-2, -2], "hi": [2, 2], "counts": [21, 21]})
    assert len(sq) == 441
    assert np.max(np.diff(np.unique(sq.points[:, 0]))) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        control_grid({"kind": "box", "lo": [0], "hi": [1], "counts": [0]})
    with pytest.raises(ValueError):
        control_grid({"kind": "disk", "rings": 0, "angles": 3})


def test_hamiltonian_sampling_gap():
    A = builtin("test1").problem.controls.points[:, 0]
    q = np.random.default_rng(3).uniform(-5, 5, 200)
    approx = np.max(-A[None, :] * q[:, None], axis=1)
    assert np.all(np.abs(approx - np.abs(q)) <= 1e-12)  # endpoints +-1 are in the lattice
    D = builtin("test2").problem.controls.points
    Q = np.random.default_rng(4).normal(size=(200, 2))
    approx = np.max(-(Q @ D.T), axis=1)
    gap = 1 - math.cos(math.pi / 24)
    assert np.all(np.abs(approx - np.linalg.norm(Q, axis=1)) <= gap * np.linalg.norm(Q, axis=1) + 1e-12)
