"""Feedback-controlled Euler-Maruyama paths driven by a computed value function."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .interpolation import interpolate


def project_unit_ball(z):
    """z if |z| <= 1, else z / |z|."""
    z = np.asarray(z, dtype=float)
    r = float(np.linalg.norm(z))
    return z / r if r > 1.0 else z.copy()


class GaussianStream:
    """Standard normals from a Philox counter-based generator.

    Uniform pairs (u, v) on (-1, 1)^2 are drawn with Generator.random and
    turned into normals by the Marsaglia polar method; both outputs of an
    accepted pair are used, first u then v.
    """

    def __init__(self, seed):
        self._gen = np.random.Generator(np.random.Philox(int(seed)))
        self._spare = None
        self.drawn = 0

    def normal(self):
        self.drawn += 1
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        while True:
            u, v = 2.0 * self._gen.random(2) - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        k = math.sqrt(-2.0 * math.log(s) / s)
        self._spare = v * k
        return u * k

    def normals(self, n):
        return np.array([self.normal() for _ in range(n)])


@dataclass
class TrajectoryRecord:
    start: np.ndarray
    seed: int
    substep: float
    times: np.ndarray
    positions: np.ndarray
    status: str                      # "exited" or "horizon"
    exit_time: float | None = None
    exit_point: np.ndarray | None = None
    label: str | None = None
    running_cost: float = 0.0
    terminal_cost: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def total_cost(self):
        return self.running_cost + self.terminal_cost

    def status_line(self):
        parts = [f"status={self.status}"]
        if self.status == "exited":
            parts += [f"exit_time={self.exit_time:.17g}",
                      "exit_point=" + ";".join(f"{c:.17g}" for c in self.exit_point),
                      f"label={self.label}"]
        parts += [f"running_cost={self.running_cost:.17g}", f"terminal_cost={self.terminal_cost:.17g}"]
        return "# " + " ".join(parts)

    def write_csv(self, path):
        d = self.positions.shape[1]
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(",".join(["t"] + [f"x{k + 1}" for k in range(d)]) + "\n")
            for t, x in zip(self.times, self.positions):
                fh.write(",".join(f"{v:.17g}" for v in (t, *x)) + "\n")
            fh.write(self.status_line() + "\n")

    def summary(self):
        return {"start": self.start.tolist(), "seed": self.seed, "status": self.status,
                "exit_time": self.exit_time, "label": self.label,
                "exit_point": None if self.exit_point is None else self.exit_point.tolist(),
                "running_cost": self.running_cost, "terminal_cost": self.terminal_cost,
                "steps": int(self.times.size - 1)}


def fd_gradient(field_k, x, h):
    """Central differences of the P1 interpolant, one-sided where the stencil leaves the domain."""
    dom = field_k.mesh.domain
    d = x.size
    g = np.zeros(d)
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        fwd_ok = dom.signed_distance((x + e)[None])[0] <= 0.0
        bwd_ok = dom.signed_distance((x - e)[None])[0] <= 0.0
        if fwd_ok and bwd_ok:
            v = interpolate(field_k, np.vstack([x + e, x - e]))
            g[j] = (v[0] - v[1]) / (2.0 * h)
        elif fwd_ok:
            v = interpolate(field_k, np.vstack([x + e, x]))
            g[j] = (v[0] - v[1]) / h
        elif bwd_ok:
            v = interpolate(field_k, np.vstack([x, x - e]))
            g[j] = (v[0] - v[1]) / h
    return g


class _ArgminFeedback:
    def __init__(self, solution):
        if not solution.controls:
            raise ValueError("argmin feedback needs a solution solved with store_controls=True")
        self.sol = solution
        self.tree = cKDTree(solution.mesh.vertices[solution.mesh.interior])

    def __call__(self, k, x):
        _, j = self.tree.query(x)
        return self.sol.problem.controls.points[self.sol.controls[k][j]]


def simulate(solution, problem, x0, seed=0, substep=None, feedback="gradient",
             labeler=None, h_fd=None, max_steps=None) -> TrajectoryRecord:
    """Euler-Maruyama under the feedback Proj(-grad V) (or the stored argmin control).

    Stops at the first step leaving the domain; the exit point is where the
    last segment crosses the boundary.
    """
    dom = problem.domain
    x = np.asarray(x0, dtype=float).reshape(dom.dim)
    if not dom.inside(x[None])[0]:
        raise ValueError(f"start point {x.tolist()} is not inside the domain")
    h = solution.dt / 2.0 if substep is None else float(substep)
    h_fd = solution.mesh.dx if h_fd is None else float(h_fd)
    T = solution.horizon
    n_steps = int(round(T / h))
    if max_steps is not None:
        n_steps = min(n_steps, max_steps)
    argmin = _ArgminFeedback(solution) if feedback == "argmin" else None
    if feedback not in ("gradient", "argmin"):
        raise ValueError("feedback must be 'gradient' or 'argmin'")
    rng = GaussianStream(seed)
    times, path = [0.0], [x.copy()]
    running = 0.0
    for n in range(n_steps):
        t = n * h
        k = solution.level_index(t)
        if argmin is None:
            a = project_unit_ball(-fd_gradient(solution.level(k), x, h_fd))
        else:
            a = argmin(min(k, solution.n_steps - 1), x)
        X1, A1 = x[None], a[None]
        b = np.asarray(problem.drift(t, X1, A1), dtype=float).reshape(dom.dim)
        S = np.asarray(problem.diffusion(t, X1, A1), dtype=float).reshape(dom.dim, -1)
        step = h * b
        if np.any(S != 0.0):
            step = step + math.sqrt(h) * S @ rng.normals(S.shape[1])
        f = float(np.asarray(problem.running_cost(t, X1, A1)).reshape(-1)[0])
        y = x + step
        if not dom.inside(y[None])[0]:
            s, P = dom.exit_fractions(x[None], np.zeros((1, dom.dim)), step[None])
            if np.isfinite(s[0]):
                s, P = float(s[0]), P[0]
            else:  # grazing exit missed by the root search
                s, P = 1.0, dom.project_boundary(y[None])[0]
            t_exit = t + s * h
            running += s * h * f
            times.append(t_exit)
            path.append(P)
            label = None if labeler is None else str(np.asarray(labeler(P[None])).reshape(-1)[0])
            return TrajectoryRecord(np.asarray(x0, float), int(seed), h,
                                    np.array(times), np.array(path), "exited", t_exit, P, label,
                                    running, float(problem.boundary_cost(t_exit, P[None])[0]),
                                    {"normals_drawn": rng.drawn})
        running += h * f
        x = y
        times.append((n + 1) * h)
        path.append(x.copy())
    return TrajectoryRecord(np.asarray(x0, float), int(seed), h, np.array(times), np.array(path),
                            "horizon", running_cost=running,
                            terminal_cost=float(problem.boundary_cost(T, x[None])[0]),
                            extra={"normals_drawn": rng.drawn})


def simulate_batch(solution, problem, starts, seeds, **kw):
    return [simulate(solution, problem, x0, seed, **kw) for x0 in starts for seed in seeds]


def batch_summary(records):
    doors = {}
    for r in records:
        key = r.label if r.status == "exited" else "horizon"
        doors[key] = doors.get(key, 0) + 1
    return {"count": len(records), "by_outcome": doors,
            "trajectories": [r.summary() for r in records]}


def write_batch_summary(records, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(batch_summary(records), indent=2))
