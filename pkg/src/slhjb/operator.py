"""Controlled semi-Lagrangian operator with boundary-data substitution.

Two paths compute the same numbers:

* ``apply_operator`` / ``minimize_over_controls`` work one node at a time,
  straight from the definitions. They are slow and meant as a reference.
* ``StencilTable`` assembles, for every (interior node, control) pair, the
  interpolation stencil of every unexited foot plus a list of exit events.
  A time step is then a gather over the previous level, done in numba.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from . import _kernels
from .characteristics import truncated_foot, truncated_feet
from .geometry import Domain, Mesh
from .interpolation import ValueField, interpolate


@dataclass(frozen=True)
class ControlSet:
    """Finite sample of the control set A.

    descriptor: {"kind": "box", "lo", "hi", "counts"} or
    {"kind": "disk", "radius", "rings", "angles"} or {"kind": "list"}.
    """

    points: np.ndarray
    descriptor: dict = field(default_factory=lambda: {"kind": "list"})

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("control set must be a nonempty (C, m) array")
        object.__setattr__(self, "points", pts)
        kind = self.descriptor.get("kind")
        if kind == "box":
            lo = np.asarray(self.descriptor["lo"], dtype=float)
            hi = np.asarray(self.descriptor["hi"], dtype=float)
            if np.any(pts < lo - 1e-12) or np.any(pts > hi + 1e-12):
                raise ValueError("control outside its box")
        elif kind == "disk":
            if np.any(np.linalg.norm(pts, axis=1) > self.descriptor["radius"] + 1e-12):
                raise ValueError("control outside its disk")

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]


def _zero_cost(t, X, A):
    return np.zeros(X.shape[0])


@dataclass(frozen=True)
class Problem:
    """HJB data. Callbacks are vectorized over rows.

    drift(t, X, A) -> (n, d); diffusion(t, X, A) -> (n, d, p);
    running_cost(t, X, A) -> (n,); boundary_cost(t, X) -> (n,), where t may
    be a scalar or an (n,) array. X is (n, d) and A is (n, m).
    """

    domain: Domain
    horizon: float
    drift: Callable
    diffusion: Callable
    boundary_cost: Callable
    controls: ControlSet
    running_cost: Callable = _zero_cost
    n_brownian: int = 1
    autonomous: bool = True
    autonomous_cost: bool = False
    name: str = "custom"

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.n_brownian < 1:
            raise ValueError("need at least one Brownian column")

    def with_controls(self, controls: ControlSet):
        return replace(self, controls=controls)

    def with_boundary_cost(self, psi):
        return replace(self, boundary_cost=psi)


class ControlChoice(NamedTuple):
    value: float
    index: int
    control: np.ndarray


# -- reference path ----------------------------------------------------------

def apply_operator(problem: Problem, next_field: ValueField, t_k, dt, node, a):
    """S(V_{k+1}, a) at one interior node, straight from the definition."""
    mesh = next_field.mesh
    if mesh.boundary[node]:
        raise ValueError(f"node {node} is a boundary node")
    x = mesh.vertices[node]
    a = np.asarray(a, dtype=float).reshape(1, -1)
    b = problem.drift(t_k, x[None], a)[0]
    sig = problem.diffusion(t_k, x[None], a)[0]
    foot = truncated_foot(problem.domain, x, t_k, dt, b, sig)
    total = 0.0
    for pi_l, col in zip(foot.pi, foot.columns):
        parts = []
        for lam, y, t_exit in ((col.lam_plus, col.foot_plus, col.time_plus),
                               (col.lam_minus, col.foot_minus, col.time_minus)):
            if lam < 1.0:
                parts.append(float(problem.boundary_cost(t_exit, y[None])[0]))
            else:
                parts.append(interpolate(next_field, y))
        total += pi_l * (col.gamma_plus * parts[0] + col.gamma_minus * parts[1])
    return total + foot.tau * float(problem.running_cost(t_k, x[None], a)[0])


def minimize_over_controls(problem: Problem, next_field: ValueField, t_k, dt, node):
    """Exhaustive minimum over the control list; first index wins ties."""
    best, arg = math.inf, -1
    for c, a in enumerate(problem.controls.points):
        val = apply_operator(problem, next_field, t_k, dt, node, a)
        if val < best:
            best, arg = val, c
    return ControlChoice(best, arg, problem.controls.points[arg])


# -- assembled path ----------------------------------------------------------

def _zero_columns(S):
    return ~np.any(S != 0, axis=(0, 1))


@dataclass
class _Rows:
    idx: np.ndarray
    w: np.ndarray
    tau: np.ndarray
    ev_row: np.ndarray
    ev_w: np.ndarray
    ev_lag: np.ndarray
    ev_pts: np.ndarray


def _assemble_rows(problem, mesh, dt, t, X, A, zero_cols, gamma_fault=False):
    """Stencils for rows (X[r], A[r]); zero_cols marks columns merged into one drift foot."""
    d = mesh.dim
    n = X.shape[0]
    B = np.asarray(problem.drift(t, X, A), dtype=float).reshape(n, d)
    S = np.asarray(problem.diffusion(t, X, A), dtype=float).reshape(n, d, -1)
    fb = truncated_feet(problem.domain, X, dt, B, S)
    sign_minus = -1.0 if gamma_fault else 1.0
    feet = []  # (weight, lam, point)
    nz = np.nonzero(~zero_cols)[0]
    for l in nz:
        feet.append((fb.pi[:, l] * fb.gamma[:, l, 0], fb.lam[:, l, 0], fb.feet[:, l, 0]))
        feet.append((sign_minus * fb.pi[:, l] * fb.gamma[:, l, 1], fb.lam[:, l, 1], fb.feet[:, l, 1]))
    zc = np.nonzero(zero_cols)[0]
    if zc.size:
        l0 = zc[0]
        wz = (fb.pi[:, zc] * (fb.gamma[:, zc, 0] + sign_minus * fb.gamma[:, zc, 1])).sum(axis=1)
        feet.append((wz, fb.lam[:, l0, 0], fb.feet[:, l0, 0]))
    width = (d + 1) * len(feet)
    idx = np.zeros((n, width), dtype=np.int32)
    w = np.zeros((n, width))
    ev = []
    for k, (wt, lam, P) in enumerate(feet):
        sl = slice(k * (d + 1), (k + 1) * (d + 1))
        inn = lam >= 1.0
        if inn.any():
            vid, bary = mesh.stencil(P[inn])
            idx[inn, sl] = vid
            w[inn, sl] = wt[inn, None] * bary
        out = np.nonzero(~inn)[0]
        if out.size:
            ev.append((out, wt[out], lam[out] * dt, P[out]))
    if ev:
        ev_row = np.concatenate([e[0] for e in ev])
        order = np.argsort(ev_row, kind="stable")
        parts = [np.concatenate([e[j] for e in ev])[order] for j in range(4)]
    else:
        parts = [np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0), np.zeros((0, d))]
    return _Rows(idx, w, fb.tau, *parts)


class StencilTable:
    """Precomputed operator for all (interior node, control) pairs.

    The geometry (feet, weights, stencils) is frozen at time ``t``; for
    autonomous drift and diffusion it is valid at every time level.
    """

    def __init__(self, problem: Problem, mesh: Mesh, dt, t=0.0, controls=None,
                 gamma_fault=False, chunk_rows=1 << 18):
        self.problem, self.mesh, self.dt, self.t = problem, mesh, float(dt), float(t)
        self.controls = problem.controls.points if controls is None else np.asarray(controls, dtype=float)
        self.nodes = mesh.interior
        n, C, d = self.nodes.size, self.controls.shape[0], mesh.dim
        Xn = mesh.vertices[self.nodes]
        step = max(1, chunk_rows // max(n, 1))
        chunks = [(c0, min(c0 + step, C)) for c0 in range(0, C, step)]

        def rows(c0, c1):
            X = np.broadcast_to(Xn[:, None, :], (n, c1 - c0, d)).reshape(-1, d)
            A = np.broadcast_to(self.controls[None, c0:c1], (n, c1 - c0, self.controls.shape[1]))
            return X, A.reshape(-1, self.controls.shape[1])

        p = problem.n_brownian
        zero = np.ones(p, dtype=bool)
        for c0, c1 in chunks:
            X, A = rows(c0, c1)
            S = np.asarray(problem.diffusion(self.t, X, A), dtype=float).reshape(X.shape[0], d, p)
            zero &= _zero_columns(S)
        self.zero_columns = zero
        n_feet = 2 * int((~zero).sum()) + int(zero.any())
        width = (d + 1) * n_feet
        self.idx = np.zeros((n, C, width), dtype=np.int32)
        self.w = np.zeros((n, C, width))
        self.tau = np.zeros((n, C))
        ev = []
        for c0, c1 in chunks:
            X, A = rows(c0, c1)
            r = _assemble_rows(problem, mesh, self.dt, self.t, X, A, zero, gamma_fault)
            cc = c1 - c0
            self.idx[:, c0:c1] = r.idx.reshape(n, cc, width)
            self.w[:, c0:c1] = r.w.reshape(n, cc, width)
            self.tau[:, c0:c1] = r.tau.reshape(n, cc)
            if r.ev_row.size:
                flat = (r.ev_row // cc) * C + c0 + r.ev_row % cc
                ev.append((flat, r.ev_w, r.ev_lag, r.ev_pts))
        if ev:
            flat = np.concatenate([e[0] for e in ev])
            order = np.argsort(flat, kind="stable")
            self.ev_row = flat[order]
            self.ev_w, self.ev_lag, self.ev_pts = (np.concatenate([e[j] for e in ev])[order] for j in (1, 2, 3))
        else:
            self.ev_row = np.zeros(0, dtype=np.int64)
            self.ev_w = self.ev_lag = np.zeros(0)
            self.ev_pts = np.zeros((0, d))
        self._rows = rows
        self._chunks = chunks
        self._tf = None

    @property
    def n_events(self):
        return self.ev_row.size

    @property
    def nbytes(self):
        return self.idx.nbytes + self.w.nbytes + self.tau.nbytes

    def running_term(self, t_k):
        """tau * f(t_k, x_i, a) for every pair, cached if f is time-independent."""
        if self._tf is not None:
            return self._tf
        n, C = self.tau.shape
        tf = np.empty((n, C))
        for c0, c1 in self._chunks:
            X, A = self._rows(c0, c1)
            f = np.asarray(self.problem.running_cost(t_k, X, A), dtype=float)
            tf[:, c0:c1] = self.tau[:, c0:c1] * np.broadcast_to(f, (X.shape[0],)).reshape(n, c1 - c0)
        if self.problem.autonomous_cost:
            self._tf = tf
        return tf

    def constant(self, t_k, boundary_cost=None):
        """Control-dependent constant: tau f plus all boundary-data terms."""
        const = np.array(self.running_term(t_k), copy=True)
        if self.n_events:
            psi = self.problem.boundary_cost if boundary_cost is None else boundary_cost
            vals = self.ev_w * np.asarray(psi(t_k + self.ev_lag, self.ev_pts), dtype=float)
            _kernels.scatter_add(const.reshape(-1), self.ev_row, vals)
        return const

    def apply(self, t_k, v_next, const=None):
        """S(V_{k+1}, a) for every pair, shape (n_interior, C)."""
        if const is None:
            const = self.constant(t_k)
        out = np.empty(const.shape)
        _kernels.apply_all(self.idx, self.w, const, np.ascontiguousarray(v_next, dtype=float), out)
        return out

    def sweep(self, t_k, v_next, const=None):
        """(min over controls, argmin index) at every interior node."""
        if const is None:
            const = self.constant(t_k)
        n = self.nodes.size
        val = np.empty(n)
        arg = np.empty(n, dtype=np.int64)
        _kernels.min_over_controls(self.idx, self.w, const, np.ascontiguousarray(v_next, dtype=float), val, arg)
        return val, arg


def evaluate_pairs(problem, mesh, dt, t_k, v_next, nodes, A):
    """S(V_{k+1}, A[r]) at mesh node nodes[r], without a cached table."""
    X = mesh.vertices[nodes]
    A = np.asarray(A, dtype=float).reshape(X.shape[0], -1)
    S = np.asarray(problem.diffusion(t_k, X, A), dtype=float).reshape(X.shape[0], mesh.dim, -1)
    r = _assemble_rows(problem, mesh, dt, t_k, X, A, _zero_columns(S))
    out = np.einsum("rs,rs->r", r.w, np.asarray(v_next)[r.idx])
    out += r.tau * np.asarray(problem.running_cost(t_k, X, A), dtype=float)
    if r.ev_row.size:
        vals = r.ev_w * np.asarray(problem.boundary_cost(t_k + r.ev_lag, r.ev_pts), dtype=float)
        _kernels.scatter_add(out, r.ev_row, vals)
    return out
