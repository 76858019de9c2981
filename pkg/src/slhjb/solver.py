"""Backward recursion over time levels and space-time evaluation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import Mesh
from .interpolation import ValueField, interpolate
from .operator import Problem, StencilTable, evaluate_pairs

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


def time_steps(horizon, dt):
    """(N, dt') with N = round(T / dt) and dt' = T / N."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    N = max(1, int(round(horizon / dt)))
    adj = horizon / N
    return N, adj


@dataclass
class Solution:
    mesh: Mesh
    problem: Problem
    dt: float
    n_steps: int
    levels: dict                      # k -> nodal values
    controls: dict = field(default_factory=dict)  # k -> argmin index per interior node
    info: dict = field(default_factory=dict)

    @property
    def horizon(self):
        return self.dt * self.n_steps

    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    def level(self, k) -> ValueField:
        if k not in self.levels:
            raise KeyError(f"time level {k} was not retained")
        return ValueField(self.mesh, self.levels[k], k * self.dt)

    @property
    def v0(self):
        return self.levels[0]

    def level_index(self, t):
        if t < -1e-12 * self.horizon or t > self.horizon * (1 + 1e-12):
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        k = int(math.floor(t / self.dt + 1e-9))
        return min(max(k, 0), self.n_steps)

    def control_field(self, k):
        """Argmin control at every vertex of level k (nan on boundary nodes)."""
        out = np.full((self.mesh.n_vertices, self.problem.controls.dim), np.nan)
        out[self.mesh.interior] = self.problem.controls.points[self.controls[k]]
        return out


def _keep_set(keep, N, dt):
    if keep == "all":
        return set(range(N + 1))
    if keep in ("t0", None):
        return {0}
    ks = {0}
    for t in np.atleast_1d(keep):
        ks.add(min(max(int(math.floor(float(t) / dt + 1e-9)), 0), N))
    return ks


def _refine_controls(problem, mesh, dt, t_k, v_next, nodes, coarse, vals, args):
    """Second pass on a 3x finer local lattice around each coarse argmin (box sets only)."""
    desc = problem.controls.descriptor
    if desc.get("kind") != "box":
        raise ValueError("control refinement needs a box control set")
    lo, hi = np.asarray(desc["lo"]), np.asarray(desc["hi"])
    counts = np.asarray(desc["counts"])
    step = np.where(counts > 1, (hi - lo) / np.maximum(counts - 1, 1), 0.0) / 3.0
    m = lo.size
    offs = np.stack(np.meshgrid(*[np.arange(-2, 3)] * m, indexing="ij"), -1).reshape(-1, m)
    offs = offs[np.any(offs != 0, axis=1)]
    centers = coarse[args]
    cand = np.clip(centers[:, None, :] + offs[None] * step, lo, hi)
    n, K = cand.shape[:2]
    rep_nodes = np.repeat(nodes, K)
    v = evaluate_pairs(problem, mesh, dt, t_k, v_next, rep_nodes, cand.reshape(-1, m)).reshape(n, K)
    j = np.argmin(v, axis=1)
    better = v[np.arange(n), j] < vals
    out = np.where(better, v[np.arange(n), j], vals)
    chosen = np.where(better[:, None], cand[np.arange(n), j], centers)
    return out, chosen


def solve(problem: Problem, mesh: Mesh, dt, keep="t0", store_controls=False,
          refine=False, workers=None, check_finite=True) -> Solution:
    """Run the explicit backward sweep k = N-1, ..., 0.

    keep: "t0", "all" or a list of times whose floor levels are retained.
    """
    if workers:
        import numba
        numba.set_num_threads(max(1, min(int(workers), numba.config.NUMBA_NUM_THREADS)))
    t_start = time.perf_counter()
    N, dt_used = time_steps(problem.horizon, dt)
    info = {"dt_requested": float(dt), "dt": dt_used, "n_steps": N,
            "dt_adjusted": not math.isclose(dt_used, dt, rel_tol=0, abs_tol=0.5 * math.ulp(dt)),
            "dx": mesh.dx, "nodes": mesh.n_vertices, "interior_nodes": int(mesh.interior.size),
            "controls": len(problem.controls)}
    if info["dt_adjusted"]:
        log.info("dt adjusted from %g to %.17g (N = %d)", dt, dt_used, N)
    keep_set = _keep_set(keep, N, dt_used)
    X = mesh.vertices
    bnd = mesh.boundary_nodes
    nodes = mesh.interior

    v = np.asarray(problem.boundary_cost(problem.horizon, X), dtype=float).reshape(-1).copy()
    levels, ctrl = {}, {}
    vmax = float(np.max(np.abs(v)))
    if N in keep_set:
        levels[N] = v.copy()
    t_build = time.perf_counter()
    table = StencilTable(problem, mesh, dt_used, t=0.0) if problem.autonomous else None
    info["build_seconds"] = time.perf_counter() - t_build
    if table is not None:
        info["table_bytes"] = table.nbytes
        info["exit_events"] = table.n_events
    for k in range(N - 1, -1, -1):
        t_k = k * dt_used
        tab = table if table is not None else StencilTable(problem, mesh, dt_used, t=t_k)
        vals, args = tab.sweep(t_k, v)
        new = np.empty_like(v)
        if refine:
            vals, chosen = _refine_controls(problem, mesh, dt_used, t_k, v, nodes,
                                            tab.controls, vals, args)
        new[nodes] = vals
        new[bnd] = problem.boundary_cost(t_k, X[bnd])
        if check_finite and not np.all(np.isfinite(new)):
            i = int(np.nonzero(~np.isfinite(new))[0][0])
            raise SolverError(f"non-finite value at time level k={k}, node i={i}")
        v = new
        vmax = max(vmax, float(np.max(np.abs(v))))
        if k in keep_set:
            levels[k] = v.copy()
            if store_controls:
                ctrl[k] = args
    if store_controls and N in keep_set:
        ctrl[N] = np.zeros(nodes.size, dtype=np.int64)
    info["max_abs_value"] = vmax  # over every level, kept or not
    info["seconds"] = time.perf_counter() - t_start
    return Solution(mesh, problem, dt_used, N, levels, ctrl, info)


def evaluate(solution: Solution, t, x):
    """V(t, x) = I[V_floor(t/dt)](x)."""
    k = solution.level_index(t)
    return interpolate(solution.level(k), x)


def gradient(solution: Solution, t, x, h=None):
    """Central differences of evaluate with step h (default: mesh dx)."""
    mesh = solution.mesh
    h = mesh.dx if h is None else float(h)
    x = np.asarray(x, dtype=float).reshape(mesh.dim)
    E = np.eye(mesh.dim) * h
    P = np.vstack([x + E, x - E])
    if np.any(mesh.domain.signed_distance(P) > mesh.domain.tol):
        raise ValueError("finite-difference stencil leaves the domain")
    field_k = solution.level(solution.level_index(t))
    vals = interpolate(field_k, P)
    return (vals[:mesh.dim] - vals[mesh.dim:]) / (2.0 * h)
