"""Estimator-style wrapper: fit solves the backward recursion, predict evaluates V."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_points, check_positive, check_step_choice
from .geometry import Mesh
from .interpolation import interpolate
from .operator import Problem
from .problems import ProblemSpec, builtin
from .solver import gradient as _gradient
from .solver import solve


class SemiLagrangianHJB(BaseEstimator):
    """Value function of a Dirichlet HJB problem on a simplicial mesh.

    problem is a built-in name ("test1", ...), a ProblemSpec, or a Problem.
    For a bare Problem a mesh must be passed; otherwise the spec builds one
    from dx. The time step is dt, or cfl * dx when dt is None.

    >>> est = SemiLagrangianHJB("test1", problem_params={"nu": 0.0}, dx=0.1).fit()
    >>> float(est.predict([[0.0]])[0])
    1.0
    """

    def __init__(self, problem="test1", problem_params=None, dx=0.05, dt=None, cfl=1.0,
                 mesh=None, keep="t0", store_controls=False, refine=False, workers=None):
        self.problem = problem
        self.problem_params = problem_params
        self.dx = dx
        self.dt = dt
        self.cfl = cfl
        self.mesh = mesh
        self.keep = keep
        self.store_controls = store_controls
        self.refine = refine
        self.workers = workers

    def _resolve(self):
        spec = None
        if isinstance(self.problem, str):
            spec = builtin(self.problem, self.problem_params)
            problem = spec.problem
        elif isinstance(self.problem, ProblemSpec):
            spec, problem = self.problem, self.problem.problem
        elif isinstance(self.problem, Problem):
            problem = self.problem
        else:
            raise TypeError("problem must be a name, a ProblemSpec or a Problem")
        if self.mesh is not None:
            if not isinstance(self.mesh, Mesh):
                raise TypeError("mesh must be a Mesh")
            mesh = self.mesh
        elif spec is not None:
            mesh = spec.make_mesh(check_positive("dx", self.dx))
        else:
            raise ValueError("a bare Problem needs an explicit mesh")
        return spec, problem, mesh

    def fit(self, X=None, y=None):
        """Build the mesh (if needed) and run the sweep. X and y are ignored."""
        dt, cfl = check_step_choice(self.dt, None if self.dt is not None else self.cfl)
        spec, problem, mesh = self._resolve()
        if dt is None:
            dt = cfl * (check_positive("dx", self.dx) if self.mesh is None else mesh.dx)
        self.spec_ = spec
        self.problem_ = problem
        self.mesh_ = mesh
        self.solution_ = solve(problem, mesh, dt, keep=self.keep,
                               store_controls=self.store_controls,
                               refine=self.refine, workers=self.workers)
        self.dt_ = self.solution_.dt
        self.n_steps_ = self.solution_.n_steps
        self.values_ = self.solution_.v0
        return self

    def predict(self, X, t=0.0):
        """V(t, x) at each row of X."""
        check_is_fitted(self, "solution_")
        X = check_points(X, self.mesh_.dim)
        k = self.solution_.level_index(float(t))
        return np.asarray(interpolate(self.solution_.level(k), X)).reshape(-1)

    def gradient(self, x, t=0.0, h=None):
        check_is_fitted(self, "solution_")
        x = check_points(x, self.mesh_.dim)[0]
        return _gradient(self.solution_, float(t), x, h)

    def score(self, X=None, y=None):
        """Negative max nodal error at t = 0 against the exact solution."""
        check_is_fitted(self, "solution_")
        if self.spec_ is None or self.spec_.exact is None:
            raise ValueError("no exact solution available for this problem")
        if X is None:
            X = self.mesh_.vertices
        X = check_points(X, self.mesh_.dim)
        ref = np.asarray(self.spec_.exact(X), dtype=float).reshape(-1)
        return -float(np.max(np.abs(self.predict(X) - ref)))
