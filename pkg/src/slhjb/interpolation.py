"""P1 interpolation of nodal values on a mesh."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import Mesh


class ValueField:
    """Nodal values of one time level, with the P1 interpolant."""

    def __init__(self, mesh: Mesh, values, t=0.0):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_vertices,):
            raise ValueError(f"expected {mesh.n_vertices} nodal values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("nodal values must be finite")
        self.mesh = mesh
        self.values = values
        self.t = float(t)

    def __call__(self, X):
        return interpolate(self, X)

    def __repr__(self):
        return f"ValueField(t={self.t:g}, n={self.values.size})"


def interpolate(field: ValueField, X):
    """I[phi](x): barycentric combination over the element holding p(x).

    A single point returns a float, an (n, d) array returns n values.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim <= 1 and X.size == field.mesh.dim
    idx, w = field.mesh.stencil(X.reshape(-1, field.mesh.dim))
    out = np.einsum("ij,ij->i", w, field.values[idx])
    return float(out[0]) if single else out


def interpolate_values(mesh: Mesh, values, X):
    return interpolate(ValueField(mesh, values), X)


def write_field_csv(field: ValueField, path):
    mesh = field.mesh
    cols = [f"x{k + 1}" for k in range(mesh.dim)] + ["value"]
    data = np.column_stack([mesh.vertices, field.values])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")


def read_field_csv(path):
    """Returns (coordinates, values) from a field CSV."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :-1], data[:, -1]
