"""Error metrics, refinement studies, consistency residuals and the property suite."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .characteristics import branch_weights, combine_columns
from .operator import StencilTable
from .solver import solve, time_steps


def linf_error_t0(solution, exact):
    """max over all nodes of |V_0,i - exact(x_i)|."""
    X = solution.mesh.vertices
    ref = np.asarray(exact(X), dtype=float).reshape(-1)
    return float(np.max(np.abs(solution.v0 - ref)))


def order(e_coarse, e_fine):
    """log2(E_coarse / E_fine)."""
    if not (e_coarse > 0 and e_fine > 0):
        raise ValueError("errors must be positive to compute an order")
    return math.log2(e_coarse / e_fine)


REPORT_FIELDS = ("dx", "dt", "nodes", "err_linf", "order", "seconds")


@dataclass
class ConvergenceReport:
    problem: str
    cfl: float
    controls: dict
    rows: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def errors(self):
        return [r["err_linf"] for r in self.rows]

    @property
    def orders(self):
        return [r["order"] for r in self.rows[1:]]

    def write_csv(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_FIELDS)
            for r in self.rows:
                w.writerow(["" if r[k] is None else (repr(float(r[k])) if k != "nodes" else r[k])
                            for k in REPORT_FIELDS])

    def to_dict(self):
        return {"problem": self.problem, "cfl": self.cfl, "controls": self.controls,
                "rows": self.rows, **self.extra}

    def write_json(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def table(self):
        lines = [f"{'dx':>10} {'dt':>10} {'nodes':>7} {'E_inf':>10} {'order':>6} {'sec':>7}"]
        for r in self.rows:
            o = "-" if r["order"] is None else f"{r['order']:.2f}"
            lines.append(f"{r['dx']:10.3e} {r['dt']:10.3e} {r['nodes']:7d} {r['err_linf']:10.3e} {o:>6} {r['seconds']:7.1f}")
        return "\n".join(lines)


def refine_study(spec, dx0, levels, cfl, mesh_factory=None, **solve_options) -> ConvergenceReport:
    """Solve at dx0, dx0/2, ... with dt = cfl * dx and tabulate errors and orders.

    The dx column is the nominal level size; the mesh's own max element
    diameter goes in extra["mesh_dx"].
    """
    if spec.exact is None:
        raise ValueError(f"{spec.name} has no exact solution to compare with")
    if levels < 1:
        raise ValueError("need at least one level")
    make = mesh_factory or spec.make_mesh
    rep = ConvergenceReport(spec.name, float(cfl), dict(spec.problem.controls.descriptor))
    rep.extra.update(params=spec.params, mesh_dx=[], dt_adjusted=[])
    prev = None
    for lev in range(levels):
        dx = dx0 / 2 ** lev
        t0 = time.perf_counter()
        mesh = make(dx)
        sol = solve(spec.problem, mesh, cfl * dx, **solve_options)
        err = linf_error_t0(sol, spec.exact)
        rep.rows.append({"dx": dx, "dt": sol.dt, "nodes": int(mesh.n_vertices), "err_linf": err,
                         "order": None if prev is None else order(prev, err),
                         "seconds": time.perf_counter() - t0})
        rep.extra["mesh_dx"].append(mesh.dx)
        rep.extra["dt_adjusted"].append(bool(sol.info["dt_adjusted"]))
        prev = err
    return rep


# -- consistency ---------------------------------------------------------------

def _operator_target(problem, fld, t, X, A):
    """-phi_t + L^a(t, x, D phi, D^2 phi) row by row."""
    n, d = X.shape
    q = fld.gradient(t, X)
    H = fld.hessian(t, X)
    B = np.asarray(problem.drift(t, X, A), dtype=float).reshape(n, d)
    S = np.asarray(problem.diffusion(t, X, A), dtype=float).reshape(n, d, -1)
    trace = np.einsum("nil,nij,njl->n", S, H, S)
    f = np.broadcast_to(np.asarray(problem.running_cost(t, X, A), dtype=float), (n,))
    return -fld.time_derivative(t, X) - 0.5 * trace - np.einsum("ni,ni->n", B, q) - f


def consistency_residual(problem, fld, dt, mesh, controls=None, levels=None):
    """sup over time levels, interior nodes and controls of
    |(phi(t_k, x_i) - S(phi_{k+1}, a)) / tau - (-phi_t + L^a)|,
    with the boundary data replaced by phi itself.
    """
    if fld is None or any(getattr(fld, k, None) is None
                          for k in ("value", "time_derivative", "gradient", "hessian")):
        raise ValueError("consistency_residual needs phi with time derivative, gradient and hessian")
    prob = problem.with_boundary_cost(fld.value)
    if controls is not None:
        prob = prob.with_controls(controls)
    N, dt = time_steps(problem.horizon, dt)
    table = StencilTable(prob, mesh, dt)
    X = mesh.vertices
    n, C = table.tau.shape
    Xr = np.broadcast_to(X[table.nodes][:, None, :], (n, C, mesh.dim)).reshape(-1, mesh.dim)
    Ar = np.broadcast_to(table.controls[None], (n, C, table.controls.shape[1])).reshape(n * C, -1)
    ks = range(N) if levels is None else levels
    worst = 0.0
    for k in ks:
        t_k = k * dt
        S = table.apply(t_k, fld.value((k + 1) * dt, X))
        lhs = (fld.value(t_k, X)[table.nodes][:, None] - S) / table.tau
        target = _operator_target(prob, fld, t_k, Xr, Ar).reshape(n, C)
        worst = max(worst, float(np.max(np.abs(lhs - target))))
    return worst


# -- property suite ------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def check_monotonicity(problem, mesh, dt, n_pairs=1000, seed=0, gamma_fault=False, tol=1e-12):
    """S(phi1, a) <= S(phi2, a) for random nodal fields phi1 <= phi2."""
    rng = np.random.default_rng(seed)
    table = StencilTable(problem, mesh, dt, gamma_fault=gamma_fault)
    const = table.constant(0.0)
    nv = mesh.n_vertices
    worst = 0.0
    for j in range(n_pairs):
        lo = rng.uniform(-1.0, 1.0, nv)
        if j % 2:
            bump = np.zeros(nv)
            bump[rng.integers(nv)] = rng.uniform(0.1, 1.0)
        else:
            bump = rng.uniform(0.0, 1.0, nv)
        diff = table.apply(0.0, lo + bump, const) - table.apply(0.0, lo, const)
        worst = min(worst, float(diff.min()))
    ok = worst >= -tol
    return CheckResult("monotonicity", ok, f"{n_pairs} pairs, min S(phi2)-S(phi1) = {worst:.3e}")


def check_constant_addition(problem, mesh, dt, constants=(-2.0, -0.5, 0.5, 2.0), seed=0, tol=1e-12):
    rng = np.random.default_rng(seed)
    table = StencilTable(problem, mesh, dt)
    const = table.constant(0.0)
    phi = rng.uniform(-1.0, 1.0, mesh.n_vertices)
    base = table.apply(0.0, phi, const)
    exited = np.zeros(base.size, dtype=bool)
    exited[table.ev_row] = True
    exited = exited.reshape(base.shape)
    eq_err, bad_ineq = 0.0, 0
    for c in constants:
        shift = table.apply(0.0, phi + c, const) - base - c
        if (~exited).any():
            eq_err = max(eq_err, float(np.abs(shift[~exited]).max()))
        if exited.any():
            s = shift[exited]
            bad_ineq += int(np.sum(s > tol) if c >= 0 else np.sum(s < -tol))
    ok = eq_err <= tol and bad_ineq == 0
    return CheckResult("constant addition", ok,
                       f"no-exit rows max |S(phi+C)-S(phi)-C| = {eq_err:.2e}; "
                       f"{int(exited.sum())} exit rows, {bad_ineq} inequality violations")


def data_bounds(problem, mesh, dt):
    """Discrete sup of |Psi| over the parabolic boundary and of |f| over nodes x controls x levels."""
    N, dt = time_steps(problem.horizon, dt)
    X = mesh.vertices
    ts = np.arange(N + 1) * dt
    psi = float(np.max(np.abs(problem.boundary_cost(problem.horizon, X))))
    Xb = X[mesh.boundary_nodes]
    for t in ts[:-1]:
        psi = max(psi, float(np.max(np.abs(problem.boundary_cost(t, Xb)))))
    A = problem.controls.points
    Xi = X[mesh.interior]
    Xr = np.repeat(Xi, A.shape[0], axis=0)
    Ar = np.tile(A, (Xi.shape[0], 1))
    times = ts[:1] if problem.autonomous_cost else ts[:-1]
    fmax = 0.0
    for t in times:
        f = np.broadcast_to(np.asarray(problem.running_cost(t, Xr, Ar), dtype=float), (Xr.shape[0],))
        fmax = max(fmax, float(np.max(np.abs(f))))
    return psi, fmax


def check_stability(problem, mesh, dt, solution=None):
    sol = solution if solution is not None else solve(problem, mesh, dt, keep="all")
    psi, fmax = data_bounds(problem, mesh, sol.dt)
    bound = psi + problem.horizon * fmax
    worst = max(float(np.max(np.abs(v))) for v in sol.levels.values())
    return CheckResult("stability", worst <= bound * (1 + 1e-12),
                       f"max_k |V_k| = {worst:.6g} <= |Psi| + T|f| = {bound:.6g}")


def check_weight_identities(n=10_000, seed=0):
    rng = np.random.default_rng(seed)
    worst = {"gamma_sum": 0.0, "gamma_formula": 0.0, "tau_l": 0.0, "pi_sum": 0.0, "pi_tau": 0.0}
    ok_range = True
    for _ in range(n // 100):
        p = int(rng.integers(1, 5))
        dt = float(rng.uniform(1e-3, 1.0))
        lam = rng.uniform(0.0, 1.0, (100, p, 2))
        lam = np.where(lam == 0.0, 1.0, lam)
        lam[rng.random((100, p, 2)) < 0.3] = 1.0
        gp, gm, tl = branch_weights(lam[..., 0], lam[..., 1], dt)
        pi, tau = combine_columns(tl, dt)
        rp, rm = np.sqrt(lam[..., 0]), np.sqrt(lam[..., 1])
        worst["gamma_sum"] = max(worst["gamma_sum"], float(np.abs(gp + gm - 1).max()))
        worst["gamma_formula"] = max(worst["gamma_formula"], float(np.abs(gp - rm / (rp + rm)).max()))
        worst["tau_l"] = max(worst["tau_l"], float(np.abs(tl - dt * rp * rm).max()))
        worst["pi_sum"] = max(worst["pi_sum"], float(np.abs(pi.sum(-1) - 1).max()))
        rel = np.abs(pi * tl - tau[:, None] / p) / (tau[:, None] / p)
        worst["pi_tau"] = max(worst["pi_tau"], float(rel.max()))
        ok_range &= bool(np.all((lam > 0) & (lam <= 1)) and np.all((tau > 0) & (tau <= dt * (1 + 1e-15)))
                         and np.all(pi >= 0) and np.all((gp >= 0) & (gm >= 0)))
    ok = (ok_range and worst["gamma_sum"] <= 1e-14 and worst["gamma_formula"] <= 1e-14
          and worst["tau_l"] <= 1e-14 and worst["pi_sum"] <= 1e-14 and worst["pi_tau"] <= 1e-13)
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    return CheckResult("weight identities", ok, f"{n} configurations, {detail}")


def check_unconstrained_reduction(problem, mesh, dt, tol=1e-13):
    """Rows whose feet all stay inside match (1/2p) sum (I(y+) + I(y-)) + dt f.

    The operator only sees the domain through exits, so these rows are what a
    domain large enough to contain every path would produce.
    """
    table = StencilTable(problem, mesh, dt)
    rng = np.random.default_rng(1)
    phi = rng.uniform(-1.0, 1.0, mesh.n_vertices)
    S = table.apply(0.0, phi)
    exited = np.zeros(S.size, dtype=bool)
    exited[table.ev_row] = True
    rows = np.nonzero(~exited)[0]
    if rows.size == 0:
        return CheckResult("unconstrained reduction", False, "no row without exits")
    rows = rows[rng.permutation(rows.size)[:5000]]
    C = table.controls.shape[0]
    nodes = table.nodes[rows // C]
    A = table.controls[rows % C]
    X = mesh.vertices[nodes]
    d = mesh.dim
    B = problem.drift(0.0, X, A)
    Sig = np.asarray(problem.diffusion(0.0, X, A), dtype=float).reshape(X.shape[0], d, -1)
    p = Sig.shape[2]
    ref = dt * np.broadcast_to(np.asarray(problem.running_cost(0.0, X, A), dtype=float), (X.shape[0],))
    for l in range(p):
        for sign in (1.0, -1.0):
            y = X + dt * B + sign * math.sqrt(p * dt) * Sig[:, :, l]
            idx, w = mesh.stencil(y)
            ref = ref + (w * phi[idx]).sum(1) / (2 * p)
    err = float(np.max(np.abs(S.reshape(-1)[rows] - ref)))
    tau_err = float(np.max(np.abs(table.tau.reshape(-1)[rows] - dt)))
    return CheckResult("unconstrained reduction", err <= tol and tau_err <= 1e-15,
                       f"{rows.size} rows without exits, max |S - classical| = {err:.2e}")


def consistency_sequence(problem, fld, mesh_for, dxs, dts, controls=None):
    return [consistency_residual(problem, fld, dt, mesh_for(dx), controls) for dx, dt in zip(dxs, dts)]


def check_consistency_decay(spec, dx0, halvings=3, controls=None, negative_dx=None):
    """Residual strictly decreasing when dt = dx are halved together.

    Negative control: dx fixed (default dx0 / 2) and dt = dx^2/4, dx^2/8, ...
    so that dx^2/dt grows; the residual is expected not to decrease.
    """
    dxs = [dx0 / 2 ** j for j in range(halvings + 1)]
    res = consistency_sequence(spec.problem, spec.test_field, spec.make_mesh, dxs, dxs, controls)
    dec = all(b < a for a, b in zip(res, res[1:]))
    fixed = dx0 / 2 if negative_dx is None else negative_dx
    dts = [fixed ** 2 / 4 / 2 ** j for j in range(halvings + 1)]
    neg = consistency_sequence(spec.problem, spec.test_field, spec.make_mesh,
                               [fixed] * len(dts), dts, controls)
    nondec = all(b >= a for a, b in zip(neg, neg[1:]))
    fmt = ", ".join(f"{r:.3e}" for r in res)
    fmt_neg = ", ".join(f"{r:.3e}" for r in neg)
    return (CheckResult("consistency decay", dec, f"dt=dx from {dx0:g}, halved: {fmt}"),
            CheckResult("consistency negative control", nondec,
                        f"dx={fixed:g} fixed, dt from dx^2/4 halved: {fmt_neg}"),
            res, neg)


def property_suite(spec, dx, dt, n_pairs=1000, gamma_fault=False, consistency_dx0=None):
    """All properties for one problem; returns a list of CheckResult."""
    mesh = spec.make_mesh(dx)
    prob = spec.problem
    out = [check_monotonicity(prob, mesh, dt, n_pairs=n_pairs, gamma_fault=gamma_fault),
           check_constant_addition(prob, mesh, dt),
           check_stability(prob, mesh, dt),
           check_stability(prob, spec.make_mesh(dx / 2), dt / 2),
           check_weight_identities(),
           # rows with no exit exist once the steps are small relative to the domain
           check_unconstrained_reduction(prob, spec.make_mesh(dx / 2), dt / 4)]
    out[3].name = "stability (refined)"
    if spec.test_field is not None and consistency_dx0 is not None:
        dec, neg, _, _ = check_consistency_decay(spec, consistency_dx0)
        out += [dec, neg]
    return out
