"""Domains, triangulations and point location.

Domains are open, bounded and convex (interval, box, disk, convex polygon).
Meshes are simplicial (segments in 1D, triangles in 2D) with every boundary
vertex sitting on the domain boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, Delaunay

from . import _kernels

EXIT_SAMPLES = 64
EXIT_TOL = 1e-12


class MeshError(ValueError):
    """Invalid mesh data (format or invariant violation)."""


class OutOfDomainError(ValueError):
    """Query point too far outside the triangulated hull."""


def _as_points(X, dim):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, dim) if dim > 1 or X.size != 1 else X.reshape(1, 1)
    if X.ndim == 1 or X.shape[-1] != dim:
        X = X.reshape(-1, dim)
    return X


# -- domains -----------------------------------------------------------------

class Domain:
    """Base class. Subclasses give signed_distance and project_boundary."""

    kind = "domain"
    dim = 0

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def tol(self) -> float:
        return 1e-12 * self.diameter

    def bounding_box(self):
        raise NotImplementedError

    def signed_distance(self, X):
        raise NotImplementedError

    def project_boundary(self, X):
        raise NotImplementedError

    def inside(self, X):
        return self.signed_distance(X) < -self.tol

    def exit_fractions(self, X, U, W):
        """First exit along s -> X + s^2 U + s W, s in (0, 1].

        Returns (s, P): s is np.inf where the path stays inside, P holds the
        exit points snapped onto the boundary (undefined rows where s is inf).
        Generic version: dense sampling followed by bisection.
        """
        X = _as_points(X, self.dim)
        U = np.broadcast_to(_as_points(U, self.dim), X.shape)
        W = np.broadcast_to(_as_points(W, self.dim), X.shape)
        n = X.shape[0]
        s_out = np.full(n, np.inf)
        # |path(s) - x| <= |U| + |W|, so paths that cannot reach the boundary are skipped
        reach = np.linalg.norm(U, axis=1) + np.linalg.norm(W, axis=1)
        cand = np.nonzero(reach >= -self.signed_distance(X) - self.tol)[0]
        grid = np.arange(1, EXIT_SAMPLES + 1) / EXIT_SAMPLES
        for lo_k in range(0, cand.size, 8192):
            rows = cand[lo_k:lo_k + 8192]
            x, u, w = X[rows], U[rows], W[rows]
            m = rows.size
            P = (x[:, None, :] + grid[None, :, None] ** 2 * u[:, None, :]
                 + grid[None, :, None] * w[:, None, :])
            out = ~self.inside(P.reshape(-1, self.dim)).reshape(m, EXIT_SAMPLES)
            hit = out.any(axis=1)
            if not hit.any():
                continue
            j = out.argmax(axis=1)[hit]
            x, u, w = x[hit], u[hit], w[hit]
            lo = j / EXIT_SAMPLES
            hi = (j + 1) / EXIT_SAMPLES
            while np.max(hi - lo) > EXIT_TOL:
                mid = 0.5 * (lo + hi)
                pm = x + (mid ** 2)[:, None] * u + mid[:, None] * w
                o = ~self.inside(pm)
                hi = np.where(o, mid, hi)
                lo = np.where(o, lo, mid)
            s_out[rows[hit]] = hi
        P = np.array(X, copy=True)
        ex = np.isfinite(s_out)
        if ex.any():
            s = s_out[ex][:, None]
            P[ex] = self.project_boundary(X[ex] + s ** 2 * U[ex] + s * W[ex])
        return s_out, P


def _smallest_positive_root(A, B, C):
    """Smallest root in (0, inf) of A s^2 + B s + C with C < 0, else inf."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        D = B * B - 4.0 * A * C
        sq = np.sqrt(np.maximum(D, 0.0))
        r_pos_b = -2.0 * C / (B + sq)
        r_neg_b = (-B + sq) / (2.0 * A)
        r = np.where(B > 0, r_pos_b, np.where(A > 0, r_neg_b, np.inf))
        r = np.where((D < 0) | ~(r > 0), np.inf, r)
    return r


class _HalfPlanes(Domain):
    """Convex domain {x : N x < c} with unit outward normals N."""

    def __init__(self, normals, offsets):
        self.normals = np.asarray(normals, dtype=float)
        self.offsets = np.asarray(offsets, dtype=float)

    def signed_distance(self, X):
        X = _as_points(X, self.dim)
        return np.max(X @ self.normals.T - self.offsets, axis=1)

    def exit_fractions(self, X, U, W):
        # exact: one quadratic per face
        X = _as_points(X, self.dim)
        U = np.broadcast_to(_as_points(U, self.dim), X.shape)
        W = np.broadcast_to(_as_points(W, self.dim), X.shape)
        g0 = X @ self.normals.T - self.offsets
        r = _smallest_positive_root(U @ self.normals.T, W @ self.normals.T, g0)
        s = r.min(axis=1) if r.shape[1] else np.full(X.shape[0], np.inf)
        s = np.where(s <= 1.0, s, np.inf)
        P = np.array(X, copy=True)
        ex = np.isfinite(s)
        if ex.any():
            se = s[ex][:, None]
            P[ex] = self.project_boundary(X[ex] + se ** 2 * U[ex] + se * W[ex])
        return s, P


class Box(_HalfPlanes):
    """Axis-aligned box (lo, hi) in any dimension."""

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(~(hi > lo)):
            raise ValueError(f"degenerate box bounds lo={lo}, hi={hi}")
        self.lo, self.hi = lo, hi
        self.dim = lo.size
        self.kind = "interval" if self.dim == 1 else "rectangle"
        eye = np.eye(self.dim)
        super().__init__(np.vstack([-eye, eye]), np.concatenate([-lo, hi]))

    @property
    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()

    def project_boundary(self, X):
        X = _as_points(X, self.dim)
        Q = np.clip(X, self.lo, self.hi)
        gaps = np.hstack([Q - self.lo, self.hi - Q])
        face = np.argmin(gaps, axis=1)
        rows = np.arange(Q.shape[0])
        axis = face % self.dim
        Q[rows, axis] = np.where(face < self.dim, self.lo[axis], self.hi[axis])
        return Q

    def params(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    def __repr__(self):
        return f"{type(self).__name__}(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


class Interval(Box):
    def __init__(self, a, b):
        super().__init__([a], [b])


class Rectangle(Box):
    def __init__(self, xrange, yrange):
        super().__init__([xrange[0], yrange[0]], [xrange[1], yrange[1]])


class ConvexPolygon(_HalfPlanes):
    """Convex polygon given by its vertices (either orientation)."""

    kind = "convex-polygon"
    dim = 2

    def __init__(self, vertices):
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2 or V.shape[0] < 3:
            raise ValueError("polygon needs at least 3 planar vertices")
        area2 = np.sum(V[:, 0] * np.roll(V[:, 1], -1) - np.roll(V[:, 0], -1) * V[:, 1])
        if abs(area2) <= 0:
            raise ValueError("degenerate polygon")
        if area2 < 0:
            V = V[::-1]
        E = np.roll(V, -1, axis=0) - V
        length = np.linalg.norm(E, axis=1)
        if np.any(length == 0):
            raise ValueError("repeated polygon vertex")
        N = np.column_stack([E[:, 1], -E[:, 0]]) / length[:, None]
        super().__init__(N, np.einsum("ij,ij->i", N, V))
        self.vertices = V
        cross = E[:, 0] * np.roll(E[:, 1], -1) - E[:, 1] * np.roll(E[:, 0], -1)
        if np.any(cross < -1e-14 * length * np.roll(length, -1)):
            raise ValueError("polygon is not convex")

    @property
    def diameter(self):
        D = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((D ** 2).sum(-1)).max())

    def bounding_box(self):
        return self.vertices.min(0), self.vertices.max(0)

    def project_boundary(self, X):
        X = _as_points(X, 2)
        A = self.vertices
        E = np.roll(A, -1, axis=0) - A
        rel = X[:, None, :] - A[None, :, :]
        t = np.clip((rel * E).sum(-1) / (E * E).sum(-1), 0.0, 1.0)
        Q = A[None] + t[..., None] * E[None]
        d = ((Q - X[:, None, :]) ** 2).sum(-1)
        k = np.argmin(d, axis=1)
        return Q[np.arange(X.shape[0]), k]

    def params(self):
        return {"vertices": self.vertices.tolist()}

    def __repr__(self):
        return f"ConvexPolygon({self.vertices.tolist()})"


class Disk(Domain):
    kind = "disk"
    dim = 2

    def __init__(self, center=(0.0, 0.0), radius=1.0):
        self.center = np.asarray(center, dtype=float).reshape(2)
        self.radius = float(radius)
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")

    @property
    def diameter(self):
        return 2.0 * self.radius

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def signed_distance(self, X):
        X = _as_points(X, 2)
        return np.linalg.norm(X - self.center, axis=1) - self.radius

    def project_boundary(self, X):
        X = _as_points(X, 2)
        D = X - self.center
        r = np.linalg.norm(D, axis=1)
        safe = r > 0
        Q = np.tile(self.center + np.array([self.radius, 0.0]), (X.shape[0], 1))
        Q[safe] = self.center + self.radius * D[safe] / r[safe, None]
        return Q

    def params(self):
        return {"center": self.center.tolist(), "radius": self.radius}

    def __repr__(self):
        return f"Disk(center={self.center.tolist()}, radius={self.radius})"


def first_exit(domain, x, dt, b, sigma, p=1, sign=1):
    """Exit of the path s -> x + s^2 dt b + sign s sqrt(p dt) sigma, s in (0, 1].

    Returns (s_exit, point); s_exit is None when the path stays inside, and
    point is then path(1).
    """
    x = np.asarray(x, dtype=float).reshape(1, domain.dim)
    U = dt * np.asarray(b, dtype=float).reshape(1, domain.dim)
    W = sign * math.sqrt(p * dt) * np.asarray(sigma, dtype=float).reshape(1, domain.dim)
    s, P = domain.exit_fractions(x, U, W)
    if np.isfinite(s[0]):
        return float(s[0]), P[0]
    return None, (x + U + W)[0]


# -- meshes ------------------------------------------------------------------

@dataclass(frozen=True)
class ElementHit:
    element: int
    barycentric: np.ndarray
    point: np.ndarray


def _simplex_measures(V, E):
    if V.shape[1] == 1:
        L = np.abs(V[E[:, 1], 0] - V[E[:, 0], 0])
        return L, L, 0.5 * L
    a = V[E[:, 1]] - V[E[:, 0]]
    b = V[E[:, 2]] - V[E[:, 0]]
    area = 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    e0 = np.linalg.norm(a, axis=1)
    e1 = np.linalg.norm(b, axis=1)
    e2 = np.linalg.norm(V[E[:, 2]] - V[E[:, 1]], axis=1)
    diam = np.maximum(np.maximum(e0, e1), e2)
    inradius = 2.0 * area / (e0 + e1 + e2)
    return area, diam, inradius


class Mesh:
    """Simplicial mesh with boundary flags and a point locator."""

    def __init__(self, vertices, elements, boundary, domain=None, validate=True):
        V = np.ascontiguousarray(np.asarray(vertices, dtype=float))
        if V.ndim == 1:
            V = V[:, None]
        E = np.ascontiguousarray(np.asarray(elements, dtype=np.int64))
        flags = np.asarray(boundary, dtype=bool)
        self.vertices, self.elements, self.boundary = V, E, flags
        self.dim = V.shape[1]
        if domain is None:
            domain = _hull_domain(V)
        self.domain = domain
        self._locator = None
        self._check_structure()
        size, diam, inr = _simplex_measures(V, E)
        bad = np.nonzero(size <= 1e-12 * np.maximum(diam, 1e-300) ** self.dim)[0]
        if bad.size:
            raise MeshError(f"degenerate element {int(bad[0])} (zero {'length' if self.dim == 1 else 'area'})")
        self.dx = float(diam.max())
        self.delta = float(inr.min() / self.dx)
        if validate:
            self._check_boundary()
        self.interior = np.nonzero(~flags)[0]
        self.boundary_nodes = np.nonzero(flags)[0]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    def _check_structure(self):
        V, E = self.vertices, self.elements
        if self.dim not in (1, 2):
            raise MeshError(f"unsupported dimension {self.dim}")
        if self.domain.dim != self.dim:
            raise MeshError("domain dimension does not match vertices")
        if E.ndim != 2 or E.shape[1] != self.dim + 1 or E.shape[0] == 0:
            raise MeshError(f"elements must be a nonempty (m, {self.dim + 1}) index array")
        if self.boundary.shape != (V.shape[0],):
            raise MeshError("one boundary flag per vertex required")
        if not np.all(np.isfinite(V)):
            raise MeshError("non-finite vertex coordinates")
        if E.min() < 0 or E.max() >= V.shape[0]:
            k = int(np.nonzero((E < 0).any(1) | (E >= V.shape[0]).any(1))[0][0])
            raise MeshError(f"element {k} has an invalid vertex index")

    def _check_boundary(self):
        sd = self.domain.signed_distance(self.vertices)
        lim = 1e-10 * self.domain.diameter
        off = np.nonzero(self.boundary & (np.abs(sd) > lim))[0]
        if off.size:
            raise MeshError(f"boundary vertex {int(off[0])} is not on the domain boundary")
        out = np.nonzero(~self.boundary & ~(sd < -self.domain.tol))[0]
        if out.size:
            raise MeshError(f"interior vertex {int(out[0])} is not strictly inside the domain")

    # point location

    def _build_locator(self):
        V, E = self.vertices, self.elements
        if self.dim == 1:
            left = np.minimum(V[E[:, 0], 0], V[E[:, 1], 0])
            order = np.argsort(left, kind="stable")
            self._locator = ("1d", order, left[order])
            return
        p0 = V[E[:, 0]]
        J = np.stack([V[E[:, 1]] - p0, V[E[:, 2]] - p0], axis=2)  # columns are edges
        inv = np.linalg.inv(J)
        cell = 2.0 * self.dx
        lo, hi = V.min(0) - cell, V.max(0) + cell
        nb = np.maximum(np.ceil((hi - lo) / cell).astype(np.int64), 1)
        start, items = _kernels.build_buckets(V, E, lo, cell, int(nb[0]), int(nb[1]))
        self._locator = ("2d", np.ascontiguousarray(p0), np.ascontiguousarray(inv),
                         lo, cell, int(nb[0]), int(nb[1]), start, items)

    def locate_many(self, X):
        """Vectorized locate: (elements, barycentric (n, d+1), projected points)."""
        X = np.ascontiguousarray(_as_points(X, self.dim))
        if self._locator is None:
            self._build_locator()
        if self.dim == 1:
            return self._locate_1d(X)
        _, p0, inv, lo, cell, nbx, nby, start, items = self._locator
        n = X.shape[0]
        elem = np.empty(n, dtype=np.int64)
        bary = np.empty((n, 3))
        proj = np.empty((n, 2))
        status = np.empty(n, dtype=np.int8)
        _kernels.locate_2d(X, self.vertices, self.elements, p0, inv, lo, cell, nbx, nby,
                           start, items, self.dx, elem, bary, proj, status)
        bad = np.nonzero(status == 2)[0]
        if bad.size:
            raise OutOfDomainError(f"point {X[bad[0]].tolist()} lies more than one element diameter outside the mesh")
        return elem, bary, proj

    def _locate_1d(self, X):
        _, order, left = self._locator
        x = X[:, 0]
        V, E = self.vertices[:, 0], self.elements
        lo_all, hi_all = V.min(), V.max()
        far = (x < lo_all - self.dx) | (x > hi_all + self.dx)
        if far.any():
            raise OutOfDomainError(f"point {float(x[far][0])} lies more than one element diameter outside the mesh")
        xp = np.clip(x, lo_all, hi_all)
        k = np.clip(np.searchsorted(left, xp, side="right") - 1, 0, left.size - 1)
        elem = order[k]
        a, b = V[E[elem, 0]], V[E[elem, 1]]
        t = np.clip((xp - a) / (b - a), 0.0, 1.0)
        bary = np.column_stack([1.0 - t, t])
        return elem, bary, xp[:, None]

    def locate(self, x) -> ElementHit:
        elem, bary, proj = self.locate_many(np.asarray(x, dtype=float).reshape(1, self.dim))
        return ElementHit(int(elem[0]), bary[0], proj[0])

    def stencil(self, X):
        """Vertex indices and weights (n, d+1) of the P1 interpolant at X."""
        elem, bary, _ = self.locate_many(X)
        return self.elements[elem], bary

    def __repr__(self):
        return (f"Mesh(dim={self.dim}, vertices={self.n_vertices}, elements={self.n_elements}, "
                f"dx={self.dx:.4g}, domain={self.domain!r})")


def _hull_domain(V):
    if V.shape[1] == 1:
        return Interval(V[:, 0].min(), V[:, 0].max())
    hull = ConvexHull(V)
    return ConvexPolygon(V[hull.vertices])


DIAGONALS = ("right", "left", "center")


def build_rect_grid(bounds, nx, ny=None, diagonal="right"):
    """Uniform lattice mesh of an interval or rectangle.

    bounds is (a, b) in 1D or ((x0, x1), (y0, y1)) / a Box in 2D.
    diagonal picks the cell split: "right" (every cell along /), "left"
    (along \\) or "center" (per quadrant, the diagonal that points at the
    rectangle center, which keeps the mesh symmetric about both midlines).
    """
    if diagonal not in DIAGONALS:
        raise ValueError(f"diagonal must be one of {DIAGONALS}")
    if isinstance(bounds, Box):
        lo, hi = bounds.lo, bounds.hi
    else:
        arr = np.asarray(bounds, dtype=float)
        if arr.ndim == 1:
            lo, hi = arr[:1], arr[1:2]
        else:
            lo, hi = arr[:, 0], arr[:, 1]
    if lo.size == 1:
        if ny is not None:
            raise ValueError("ny given for a 1D grid")
        nx = int(nx)
        if nx < 1:
            raise ValueError("nx must be positive")
        domain = Interval(lo[0], hi[0])
        x = np.linspace(lo[0], hi[0], nx + 1)
        elements = np.column_stack([np.arange(nx), np.arange(1, nx + 1)])
        flags = np.zeros(nx + 1, dtype=bool)
        flags[[0, -1]] = True
        return Mesh(x[:, None], elements, flags, domain)
    ny = nx if ny is None else ny
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be positive")
    domain = Box(lo, hi)
    xs = np.linspace(lo[0], hi[0], nx + 1)
    ys = np.linspace(lo[1], hi[1], ny + 1)
    X, Y = np.meshgrid(xs, ys)  # vertex j*(nx+1) + i
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    v00 = (j * (nx + 1) + i).ravel()
    v10, v01 = v00 + 1, v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    # the same cell split along the other diagonal
    lower_b = np.column_stack([v00, v10, v01])
    upper_b = np.column_stack([v10, v11, v01])
    if diagonal == "right":
        flip = np.zeros(v00.size, dtype=bool)
    elif diagonal == "left":
        flip = np.ones(v00.size, dtype=bool)
    else:
        cx = (i.ravel() + 0.5) - 0.5 * nx
        cy = (j.ravel() + 0.5) - 0.5 * ny
        flip = cx * cy < 0
    lower = np.where(flip[:, None], lower_b, lower)
    upper = np.where(flip[:, None], upper_b, upper)
    elements = np.stack([lower, upper], axis=1).reshape(-1, 3)
    I, J = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    flags = ((I == 0) | (I == nx) | (J == 0) | (J == ny)).ravel()
    return Mesh(verts, elements, flags, domain)


RING_FACTOR = 0.58


def build_disk_mesh(radius=1.0, target_h=0.125, center=(0.0, 0.0), ring_factor=RING_FACTOR):
    """Polar-structured Delaunay triangulation of a disk.

    Concentric rings with spacing ring_factor * target_h, alternate rings
    rotated by half an angular step, outer ring exactly on the circle.
    ring_factor is shrunk until the max element diameter is <= target_h.
    """
    radius, target_h = float(radius), float(target_h)
    if not 0 < target_h < radius:
        raise ValueError("need 0 < target_h < radius")
    domain = Disk(center, radius)
    c = np.asarray(center, dtype=float)
    kappa = ring_factor
    for _ in range(50):
        n_rings = int(math.ceil(radius / (kappa * target_h)))
        dr = radius / n_rings
        pts = [np.zeros((1, 2))]
        for j in range(1, n_rings + 1):
            r = radius if j == n_rings else j * dr
            n_ang = max(6, int(math.ceil(2.0 * math.pi * r / dr)))
            theta = (np.arange(n_ang) + 0.5 * (j % 2)) * (2.0 * math.pi / n_ang)
            pts.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
        n_outer = pts[-1].shape[0]
        P = np.vstack(pts) + c
        tri = Delaunay(P).simplices.astype(np.int64)
        a = P[tri[:, 1]] - P[tri[:, 0]]
        b = P[tri[:, 2]] - P[tri[:, 0]]
        cr = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        tri = tri[np.abs(cr) > 1e-14 * target_h ** 2]
        flip = (P[tri[:, 1], 0] - P[tri[:, 0], 0]) * (P[tri[:, 2], 1] - P[tri[:, 0], 1]) \
            - (P[tri[:, 1], 1] - P[tri[:, 0], 1]) * (P[tri[:, 2], 0] - P[tri[:, 0], 0]) < 0
        tri[flip] = tri[flip][:, [0, 2, 1]]
        flags = np.zeros(P.shape[0], dtype=bool)
        flags[-n_outer:] = True
        mesh = Mesh(P, tri, flags, domain)
        if mesh.dx <= target_h * (1 + 1e-9):
            return mesh
        kappa *= 0.95
    raise RuntimeError("could not meet target_h")  # pragma: no cover


# -- mesh files --------------------------------------------------------------

def format_mesh(mesh: Mesh) -> str:
    lines = [f"DIM {mesh.dim}", f"VERTICES {mesh.n_vertices}"]
    for x, f in zip(mesh.vertices, mesh.boundary):
        lines.append(" ".join(f"{c:.17g}" for c in x) + f" {int(f)}")
    lines.append(f"ELEMENTS {mesh.n_elements}")
    for e in mesh.elements:
        lines.append(" ".join(str(int(k)) for k in e))
    return "\n".join(lines) + "\n"


def save_mesh(mesh: Mesh, path):
    Path(path).write_text(format_mesh(mesh))


def parse_mesh(text: str, domain=None) -> Mesh:
    """Parse the mesh text format; the domain defaults to the convex hull."""
    rows = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((no, line.split()))
    pos = 0

    def take(keyword):
        nonlocal pos
        if pos >= len(rows):
            raise MeshError(f"unexpected end of file, expected '{keyword}'")
        no, tok = rows[pos]
        if len(tok) != 2 or tok[0].upper() != keyword:
            raise MeshError(f"line {no}: expected '{keyword} <count>'")
        try:
            val = int(tok[1])
        except ValueError:
            raise MeshError(f"line {no}: bad count {tok[1]!r}") from None
        if val < 0:
            raise MeshError(f"line {no}: negative count")
        pos += 1
        return val

    dim = take("DIM")
    if dim not in (1, 2, 3):
        raise MeshError(f"line {rows[0][0]}: unsupported DIM {dim}")
    nv = take("VERTICES")
    V = np.empty((nv, dim))
    flags = np.empty(nv, dtype=bool)
    for k in range(nv):
        if pos >= len(rows):
            raise MeshError(f"unexpected end of file in vertex block (got {k} of {nv})")
        no, tok = rows[pos]
        if len(tok) != dim + 1:
            raise MeshError(f"line {no}: expected {dim} coordinates and a flag")
        try:
            V[k] = [float(t) for t in tok[:dim]]
            flag = int(tok[dim])
        except ValueError:
            raise MeshError(f"line {no}: malformed vertex") from None
        if flag not in (0, 1):
            raise MeshError(f"line {no}: boundary flag must be 0 or 1")
        flags[k] = bool(flag)
        pos += 1
    ne = take("ELEMENTS")
    E = np.empty((ne, dim + 1), dtype=np.int64)
    for k in range(ne):
        if pos >= len(rows):
            raise MeshError(f"unexpected end of file in element block (got {k} of {ne})")
        no, tok = rows[pos]
        if len(tok) != dim + 1:
            raise MeshError(f"line {no}: expected {dim + 1} vertex indices")
        try:
            E[k] = [int(t) for t in tok]
        except ValueError:
            raise MeshError(f"line {no}: malformed element") from None
        pos += 1
    if pos != len(rows):
        raise MeshError(f"line {rows[pos][0]}: trailing content")
    if dim == 3:
        raise MeshError("3D meshes are not supported")
    try:
        return Mesh(V, E, flags, domain)
    except MeshError:
        raise
    except ValueError as exc:  # e.g. hull of degenerate points
        raise MeshError(str(exc)) from None


def load_mesh(path, domain=None) -> Mesh:
    return parse_mesh(Path(path).read_text(), domain)
