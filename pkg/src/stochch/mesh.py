"""Uniform P1 triangulations of the square [-1, 1]^2."""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DOMAIN = (-1.0, 1.0)
DOMAIN_AREA = 4.0


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with P1 nodal bookkeeping.

    Attributes
    ----------
    vertices : ndarray, shape (nv, 2)
    triangles : ndarray of int, shape (nt, 3)
        Counterclockwise vertex indices.
    n : int
        Subdivisions per side for the structured family, 0 otherwise.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    n: int = 0
    boundary_flags: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("vertices must have shape (nv, 2)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("triangles must have shape (nt, 3)")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle references a missing vertex")
        if self.boundary_flags is None:
            lo, hi = DOMAIN
            flags = np.any(np.isclose(v, lo) | np.isclose(v, hi), axis=1)
        else:
            flags = np.asarray(self.boundary_flags, dtype=bool)
        for arr in (v, t, flags):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "boundary_flags", flags)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def corners(self):
        """Triangle corner coordinates, shape (nt, 3, 2)."""
        return self.vertices[self.triangles]

    @cached_property
    def signed_areas(self):
        p = self.corners
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self):
        return np.abs(self.signed_areas)

    @cached_property
    def basis_gradients(self):
        """Constant gradients of the three local hat functions, shape (nt, 3, 2)."""
        p = self.corners
        twice = 2.0 * self.signed_areas
        # grad(lambda_i) = rot90(p_{i+2} - p_{i+1}) / (2 |T|)
        g = np.empty_like(p)
        for i in range(3):
            d = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
            g[:, i, 0] = -d[:, 1] / twice
            g[:, i, 1] = d[:, 0] / twice
        g.setflags(write=False)
        return g

    @cached_property
    def edges(self):
        """Unique undirected edges as sorted vertex pairs, shape (ne, 2)."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def edge_lengths(self):
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    @property
    def h(self):
        """Longest edge length."""
        return float(self.edge_lengths.max())

    @property
    def h_axis(self):
        """Axis-aligned grid spacing 2/n for the structured family."""
        if not self.n:
            raise AttributeError("h_axis is only defined for structured meshes")
        return (DOMAIN[1] - DOMAIN[0]) / self.n

    def quadrature_points(self, bary):
        """Physical coordinates of barycentric points, shape (nt, nq, 2)."""
        return np.einsum("qk,tkd->tqd", bary, self.corners)

    def interpolate(self, func):
        """Nodal interpolant of ``func(points) -> values``."""
        return np.asarray(func(self.vertices), dtype=float)

    def dump(self, path):
        """Write a plain-text vertex/triangle listing (debugging aid)."""
        with open(path, "w") as fh:
            fh.write(f"# vertices {self.n_vertices}\n")
            for i, (x, y) in enumerate(self.vertices):
                fh.write(f"v {i} {x:.17g} {y:.17g} {int(self.boundary_flags[i])}\n")
            fh.write(f"# triangles {self.n_triangles}\n")
            for k, (a, b, c) in enumerate(self.triangles):
                fh.write(f"t {k} {a} {b} {c}\n")


def build_uniform_mesh(n):
    """Diagonal-split uniform mesh of [-1, 1]^2 with ``n`` cells per side.

    Vertices are ordered lexicographically by (x2, x1); every square cell is
    cut along its lower-left to upper-right diagonal.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    lo, hi = DOMAIN
    s = np.linspace(lo, hi, n + 1)
    x1, x2 = np.meshgrid(s, s, indexing="xy")
    vertices = np.column_stack([x1.ravel(), x2.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh(vertices, triangles, n=n)


def gradient_on_triangle(mesh, t, coeffs):
    """Constant gradient of the P1 function ``coeffs`` on triangle ``t``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (mesh.n_vertices,):
        raise ValueError(
            f"coeffs must have length {mesh.n_vertices}, got shape {coeffs.shape}"
        )
    if not -mesh.n_triangles <= t < mesh.n_triangles:
        raise IndexError(f"triangle index {t} out of range")
    g = mesh.basis_gradients[t]
    return coeffs[mesh.triangles[t]] @ g


def gradients(mesh, coeffs):
    """Per-triangle gradients of a P1 field, shape (nt, 2)."""
    return np.einsum("tk,tkd->td", np.asarray(coeffs)[mesh.triangles], mesh.basis_gradients)


def prolongate(coarse, fine, u):
    """Evaluate a P1 field on ``coarse`` at the vertices of ``fine``.

    Both meshes must belong to the structured family; nesting makes this the
    exact representation of the coarse field on the fine mesh.
    """
    if not coarse.n or not fine.n:
        raise ValueError("prolongation requires structured meshes")
    if fine.n % coarse.n:
        raise ValueError(f"meshes are not nested: {coarse.n} does not divide {fine.n}")
    u = np.asarray(u, dtype=float)
    n = coarse.n
    lo = DOMAIN[0]
    hx = coarse.h_axis
    p = (fine.vertices - lo) / hx
    cell = np.clip(np.floor(p).astype(np.int64), 0, n - 1)
    xi, eta = (p - cell).T
    i, j = cell.T
    v00 = j * (n + 1) + i
    u00, u10 = u[v00], u[v00 + 1]
    u01, u11 = u[v00 + n + 1], u[v00 + n + 2]
    low = xi >= eta
    return np.where(
        low,
        u00 + xi * (u10 - u00) + eta * (u11 - u10),
        u00 + eta * (u01 - u00) + xi * (u11 - u01),
    )
