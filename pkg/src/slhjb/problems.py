"""Built-in test problems and control-set constructors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import Disk, Interval, Rectangle, build_disk_mesh, build_rect_grid
from .operator import ControlSet, Problem


def control_grid(descriptor) -> ControlSet:
    """Sample a compact control set.

    {"kind": "box", "lo": [...], "hi": [...], "counts": [...]} gives the tensor
    lattice (corners and, for odd counts, the center included).
    {"kind": "disk", "radius": r, "rings": R, "angles": K} gives the origin
    plus R rings at radii r j / R with K angles each.
    """
    desc = dict(descriptor)
    kind = desc.get("kind")
    if kind == "box":
        lo = np.atleast_1d(np.asarray(desc["lo"], dtype=float))
        hi = np.atleast_1d(np.asarray(desc["hi"], dtype=float))
        counts = np.broadcast_to(np.atleast_1d(np.asarray(desc["counts"], dtype=int)), lo.shape)
        if np.any(counts < 1):
            raise ValueError("box control counts must be positive")
        if np.any(hi < lo):
            raise ValueError("box control bounds reversed")
        axes = [np.linspace(a, b, n) if n > 1 else np.array([0.5 * (a + b)])
                for a, b, n in zip(lo, hi, counts)]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([g.ravel() for g in grids])
        desc.update(lo=lo.tolist(), hi=hi.tolist(), counts=counts.tolist())
    elif kind == "disk":
        radius = float(desc.get("radius", 1.0))
        rings, angles = int(desc["rings"]), int(desc["angles"])
        if rings < 1 or angles < 1:
            raise ValueError("disk control counts must be positive")
        theta = 2.0 * math.pi * np.arange(angles) / angles
        unit = np.column_stack([np.cos(theta), np.sin(theta)])
        unit[np.abs(unit) < 1e-15] = 0.0
        pts = [np.zeros((1, 2))]
        for j in range(1, rings + 1):
            pts.append((radius * j / rings) * unit)
        pts = np.vstack(pts)
        desc.update(radius=radius, rings=rings, angles=angles)
    elif kind == "list":
        pts = np.asarray(desc.pop("points"), dtype=float)
    else:
        raise ValueError(f"unknown control set kind {kind!r}")
    return ControlSet(pts, desc)


@dataclass(frozen=True)
class SmoothField:
    """A smooth function of (t, x) with analytic derivatives."""

    value: Callable
    time_derivative: Callable
    gradient: Callable
    hessian: Callable


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    params: dict
    problem: Problem
    exact: Optional[Callable]
    make_mesh: Callable
    dx_convention: str
    theory_covered: bool = True
    test_field: Optional[SmoothField] = None
    labeler: Optional[Callable] = None
    starts: Optional[np.ndarray] = None
    notes: dict = field(default_factory=dict)


# -- test 1: Dirichlet problem on (0, 1) --------------------------------------

def _test1(params):
    nu = float(params.get("nu", 0.0))
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    n_ctrl = int(params.get("controls", 21))
    sig = math.sqrt(2.0 * nu)

    def drift(t, X, A):
        return A[:, :1] * np.ones((X.shape[0], 1))

    def diffusion(t, X, A):
        return np.full((X.shape[0], 1, 1), sig)

    def psi(t, X):
        return (1.0 - t) * (1.0 - X[:, 0])

    def exact(X):
        X = np.asarray(X, dtype=float).reshape(-1, 1)
        return np.where(X[:, 0] <= 0.0, 1.0, 0.0)

    # equals psi on the parabolic boundary, not affine in x
    def tb(t, X):
        return np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))

    test_field = SmoothField(
        value=lambda t, X: (1.0 - tb(t, X)) * (1.0 - X[:, 0] ** 2),
        time_derivative=lambda t, X: -(1.0 - X[:, 0] ** 2),
        gradient=lambda t, X: (-2.0 * (1.0 - tb(t, X)) * X[:, 0])[:, None],
        hessian=lambda t, X: (-2.0 * (1.0 - tb(t, X)))[:, None, None],
    )
    controls = control_grid({"kind": "box", "lo": [-1.0], "hi": [1.0], "counts": [n_ctrl]})
    problem = Problem(Interval(0.0, 1.0), 1.0, drift, diffusion, psi, controls,
                      n_brownian=1, autonomous=True, autonomous_cost=True, name="test1")
    return ProblemSpec("test1", {"nu": nu, "controls": n_ctrl}, problem,
                       exact if nu == 0 else None,
                       lambda dx: build_rect_grid((0.0, 1.0), int(round(1.0 / dx))),
                       "spacing", test_field=test_field)


# -- test 2: smooth solution on the unit disk --------------------------------

def _test2_cost(t, X, A=None):
    x1, x2 = X[:, 0], X[:, 1]
    s1, s2, c1, c2 = np.sin(x1), np.sin(x2), np.cos(x1), np.cos(x2)
    ss = np.sin(x1 + x2)
    cc = np.cos(x1 + x2)
    grad_norm = np.sqrt(c1 ** 2 * s2 ** 2 + s1 ** 2 * c2 ** 2)
    return (t - 0.5) * s1 * s2 + (t + 0.5) * (grad_norm - 2.0 * ss * cc * c1 * c2)


def _test2_value(t, X):
    return (t + 0.5) * np.sin(X[:, 0]) * np.sin(X[:, 1])


def _test2_field():
    def dt_(t, X):
        return np.sin(X[:, 0]) * np.sin(X[:, 1]) * np.ones_like(np.asarray(t, float))

    def grad(t, X):
        s1, s2, c1, c2 = np.sin(X[:, 0]), np.sin(X[:, 1]), np.cos(X[:, 0]), np.cos(X[:, 1])
        return (np.asarray(t, float) + 0.5)[..., None] * np.column_stack([c1 * s2, s1 * c2])

    def hess(t, X):
        s1, s2, c1, c2 = np.sin(X[:, 0]), np.sin(X[:, 1]), np.cos(X[:, 0]), np.cos(X[:, 1])
        H = np.empty((X.shape[0], 2, 2))
        H[:, 0, 0] = H[:, 1, 1] = -s1 * s2
        H[:, 0, 1] = H[:, 1, 0] = c1 * c2
        return (np.asarray(t, float) + 0.5)[..., None, None] * H

    return SmoothField(_test2_value, dt_, grad, hess)


def _test2(params):
    rings = int(params.get("rings", 8))
    angles = int(params.get("angles", 24))

    def drift(t, X, A):
        return np.array(A, dtype=float, copy=True)

    def diffusion(t, X, A):
        S = np.zeros((X.shape[0], 2, 2))
        z = X[:, 0] + X[:, 1]
        S[:, 0, 0] = math.sqrt(2.0) * np.sin(z)
        S[:, 1, 0] = math.sqrt(2.0) * np.cos(z)
        return S

    def running(t, X, A):
        return _test2_cost(t, X)

    controls = control_grid({"kind": "disk", "radius": 1.0, "rings": rings, "angles": angles})
    problem = Problem(Disk((0.0, 0.0), 1.0), 1.0, drift, diffusion, _test2_value, controls,
                      running_cost=running, n_brownian=2, autonomous=True,
                      autonomous_cost=False, name="test2")
    return ProblemSpec("test2", {"rings": rings, "angles": angles}, problem,
                       lambda X: _test2_value(0.0, np.asarray(X, float).reshape(-1, 2)),
                       lambda dx: build_disk_mesh(1.0, dx), "max-diameter",
                       test_field=_test2_field())


# -- test 3: distance-like solution on the unit square -----------------------

def _test3_psi(X):
    x1, x2 = X[:, 0], X[:, 1]
    return np.minimum(np.minimum(x1, 1.0 - x1), np.minimum(2.0 * x2, 2.0 * (1.0 - x2)))


def _test3(params):
    n_ctrl = int(params.get("controls", 21))
    T = 1.5

    def drift(t, X, A):
        return np.array(A, dtype=float, copy=True)

    def diffusion(t, X, A):
        return np.zeros((X.shape[0], 2, 1))

    def running(t, X, A):
        return 1.0 + 0.25 * A[:, 0] ** 2 + A[:, 1] ** 2

    def psi(t, X):
        t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
        return np.where(t >= T, -2.0 * _test3_psi(X), 0.0)

    controls = control_grid({"kind": "box", "lo": [-2.0, -2.0], "hi": [2.0, 2.0],
                             "counts": [n_ctrl, n_ctrl]})
    problem = Problem(Rectangle((0.0, 1.0), (0.0, 1.0)), T, drift, diffusion, psi, controls,
                      running_cost=running, n_brownian=1, autonomous=True,
                      autonomous_cost=True, name="test3")
    return ProblemSpec("test3", {"controls": n_ctrl}, problem,
                       lambda X: _test3_psi(np.asarray(X, float).reshape(-1, 2)),
                       lambda dx: build_rect_grid(((0.0, 1.0), (0.0, 1.0)), int(round(1.0 / dx))),
                       "spacing")


# -- test 4: escape from a room with two doors -------------------------------

TEST4_STARTS = np.array([[-0.1, -0.3], [-0.1, 0.1], [-0.1, 0.3],
                         [0.2, -0.3], [0.3, 0.2], [0.2, 0.3]])
DOOR_HALF_WIDTH = 0.2


def door_label(X):
    """'G1' (left door), 'G2' (right door) or 'Gw' (walls) for boundary points."""
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    door = np.abs(X[:, 1]) <= DOOR_HALF_WIDTH
    left = door & (X[:, 0] <= -1.0 + 1e-12)
    right = door & (X[:, 0] >= 1.0 - 1e-12)
    return np.where(left, "G1", np.where(right, "G2", "Gw"))


def _test4(params):
    rings = int(params.get("rings", 8))
    angles = int(params.get("angles", 24))
    T = 5.0
    sigma_on = bool(params.get("sigma", True))

    def drift(t, X, A):
        return np.array(A, dtype=float, copy=True)

    def noise_level(X):
        return 10.0 * np.maximum(0.16 - X[:, 0] ** 2 - X[:, 1] ** 2, 0.0)

    def diffusion(t, X, A):
        S = np.zeros((X.shape[0], 2, 2))
        if sigma_on:
            S[:, 0, 0] = noise_level(X)
        return S

    def running(t, X, A):
        return 0.5 * (A[:, 0] ** 2 + A[:, 1] ** 2) + 40.0

    def psi(t, X):
        t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
        label = door_label(X)
        side = np.where(label == "G1", 0.0, np.where(label == "G2", 0.2, 100.0))
        return np.where(t >= T, 0.0, side)

    def make_mesh(dx):
        # dx is the element diameter of the right-angled lattice triangles
        h = dx / math.sqrt(2.0)
        return build_rect_grid(((-1.0, 1.0), (-0.5, 0.5)), int(round(2.0 / h)), int(round(1.0 / h)))

    controls = control_grid({"kind": "disk", "radius": 1.0, "rings": rings, "angles": angles})
    problem = Problem(Rectangle((-1.0, 1.0), (-0.5, 0.5)), T, drift, diffusion, psi, controls,
                      running_cost=running, n_brownian=2, autonomous=True,
                      autonomous_cost=True, name="test4")
    return ProblemSpec("test4", {"rings": rings, "angles": angles, "sigma": sigma_on}, problem,
                       None, make_mesh, "diameter", theory_covered=False,
                       labeler=door_label, starts=TEST4_STARTS.copy())


_BUILDERS = {"test1": _test1, "test2": _test2, "test3": _test3, "test4": _test4}
NAMES = tuple(_BUILDERS)


def builtin(name: str, params: Optional[dict] = None) -> ProblemSpec:
    if name not in _BUILDERS:
        raise ValueError(f"unknown problem {name!r}; choose from {', '.join(NAMES)}")
    return _BUILDERS[name](dict(params or {}))


def pde_residual_test2(t, X):
    """PDE residual of the test 2 exact solution with |D v| in place of the
    max over the control ball. Should vanish up to rounding."""
    fld = _test2_field()
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
    q = fld.gradient(t, X)
    H = fld.hessian(t, X)
    z = X[:, 0] + X[:, 1]
    s = math.sqrt(2.0) * np.column_stack([np.sin(z), np.cos(z)])
    trace = np.einsum("ni,nij,nj->n", s, H, s)
    return -fld.time_derivative(t, X) - 0.5 * trace + np.linalg.norm(q, axis=1) - _test2_cost(t, X)
