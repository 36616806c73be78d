"""Sparse P1 operators for the stochastic Cahn-Hilliard scheme.

All matrices are assembled element by element into ``scipy.sparse.csr_matrix``
objects with a fixed, deterministic summation order.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.special import exp1

from .quadrature import graded_line_rule, line_rule, triangle_rule

DEFAULT_QUAD_ORDER = 4

_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class VectorFieldX:
    """Rotational field ``phi(r) * (x2, -x1)`` with a smooth radial cutoff.

    ``phi(r) = exp(-a / (R^2 - r^2))`` for ``r < R`` and zero otherwise, with
    ``a = 0.001`` and ``R = 0.8`` by default. The field is the rotated gradient
    of the radial stream function ``S`` (``X = (dS/dx2, -dS/dx1)``), which is
    available in closed form and vanishes for ``r >= R``.

    Parameters
    ----------
    amplitude : float
        Scalar multiple applied to the field; ``0`` gives the zero field.
    """

    def __init__(self, amplitude=1.0, radius=0.8, a=0.001):
        self.amplitude = float(amplitude)
        self.radius = float(radius)
        self.a = float(a)

    def __repr__(self):
        return f"VectorFieldX(amplitude={self.amplitude}, radius={self.radius}, a={self.a})"

    def cutoff(self, r):
        r = np.asarray(r, dtype=float)
        v = self.radius**2 - r**2
        out = np.zeros_like(v)
        inside = v > 0
        out[inside] = np.exp(-self.a / v[inside])
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        phi = self.amplitude * self.cutoff(r)
        return np.stack([phi * x[..., 1], -phi * x[..., 0]], axis=-1)

    def stream(self, x):
        """Stream function ``S`` with ``S = 0`` for ``r >= R``."""
        x = np.asarray(x, dtype=float)
        v = self.radius**2 - (x[..., 0] ** 2 + x[..., 1] ** 2)
        return self.amplitude * np.where(v > 0, -0.5 * _exp_integral(v, self.a), 0.0)

    def stream_flux(self, x):
        """Field ``F = x q(r)`` with ``div F = S``."""
        x = np.asarray(x, dtype=float)
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        R2, a = self.radius**2, self.a
        v = np.maximum(R2 - r2, 0.0)
        # int_0^r s S(s) ds = -(1/4) [G(R^2) - G(v)],  G' = E(., a)
        big = -0.25 * (_stream_antiderivative(R2, a) - _stream_antiderivative(v, a))
        small_r = r2 < 1e-6
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(small_r, 0.0, big / np.where(small_r, 1.0, r2))
        S0 = -0.5 * _exp_integral(np.array(R2), a)
        phi0 = np.exp(-a / R2)
        q = np.where(small_r, 0.5 * S0 + phi0 * r2 / 8.0, q)
        return self.amplitude * q[..., None] * x

    def second_moment_flux(self, x):
        """Fields ``F_ab`` with ``div F_ab = phi(r)^2 x_a x_b``.

        Returns shape ``(..., 3, 2)`` for ``ab`` in (11, 12, 22).
        """
        x = np.asarray(x, dtype=float)
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        R2, b = self.radius**2, 2.0 * self.a
        v = np.maximum(R2 - r2, 0.0)
        # H(r) = int_0^r s^3 phi(s)^2 ds
        H = 0.5 * (R2 * (_exp_integral(R2, b) - _exp_integral(v, b))
                   - (_exp_moment(R2, b) - _exp_moment(v, b)))
        small_r = r2 < 1e-6
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(small_r, 0.0, H / np.where(small_r, 1.0, r2 * r2))
        rho0 = np.exp(-b / R2)
        q = np.where(small_r, rho0 * (0.25 - b * r2 / (6.0 * R2 * R2)), q)
        q = self.amplitude**2 * q
        x1, x2 = x[..., 0], x[..., 1]
        P = np.stack([x1 * x1, x1 * x2, x2 * x2], axis=-1)
        return (P * q[..., None])[..., None] * x[..., None, :]

    def divergence(self, x, step=1e-6):
        """Central-difference divergence (diagnostic only)."""
        x = np.asarray(x, dtype=float)
        e0 = np.array([step, 0.0])
        e1 = np.array([0.0, step])
        return (self(x + e0)[..., 0] - self(x - e0)[..., 0]
                + self(x + e1)[..., 1] - self(x - e1)[..., 1]) / (2 * step)


def _exp_integral(w, b):
    """``int_0^w exp(-b/s) ds``."""
    w = np.asarray(w, dtype=float)
    pos = w > 0
    ws = np.where(pos, w, 1.0)
    return np.where(pos, ws * np.exp(-b / ws) - b * exp1(b / ws), 0.0)


def _exp_moment(w, b):
    """``int_0^w s exp(-b/s) ds``."""
    w = np.asarray(w, dtype=float)
    pos = w > 0
    ws = np.where(pos, w, 1.0)
    return np.where(pos, 0.5 * (ws * ws * np.exp(-b / ws) - b * _exp_integral(ws, b)), 0.0)


def _stream_antiderivative(w, a):
    """``int_0^w E(s, a) ds`` with ``E = _exp_integral``."""
    w = np.asarray(w, dtype=float)
    pos = w > 0
    ws = np.where(pos, w, 1.0)
    val = _exp_moment(ws, a) - a * ((ws + a) * exp1(a / ws) - ws * np.exp(-a / ws))
    return np.where(pos, val, 0.0)


def _scatter(mesh, local, shape=None):
    """Sum per-element (nt, 3, 3) blocks into a CSR matrix."""
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape or (n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _scatter_vector(mesh, local):
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def element_mass(area):
    """Closed-form P1 element mass matrix."""
    return area * _LOCAL_MASS


def assemble_mass(mesh):
    local = mesh.areas[:, None, None] * _LOCAL_MASS
    return _scatter(mesh, local)


def stiffness_blocks(mesh):
    g = mesh.basis_gradients
    return mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", g, g)


def assemble_stiffness(mesh):
    return _scatter(mesh, stiffness_blocks(mesh))


def lumped_basis_integrals(mesh):
    """Vector of ``(psi_i, 1)``."""
    return _scatter_vector(mesh, np.repeat(mesh.areas[:, None] / 3.0, 3, axis=1))


def _edge_rule(pa, pb, radius, order, band=0.1):
    """Per-edge quadrature on [0, 1]: plain Gauss, or graded near the cutoff circle.

    Returns a list of ``(edge_ids, s, w)`` groups sharing one rule.
    """
    d = pb - pa
    A = np.einsum("ed,ed->e", d, d)
    B = 2 * np.einsum("ed,ed->e", pa, d)
    C = np.einsum("ed,ed->e", pa, pa) - radius**2
    ra = np.sqrt(np.einsum("ed,ed->e", pa, pa))
    rb = np.sqrt(np.einsum("ed,ed->e", pb, pb))
    disc = B * B - 4 * A * C
    groups = []
    plain = np.ones(len(pa), dtype=bool)
    for e in np.flatnonzero((disc > 0) | (np.abs(ra - radius) < band) | (np.abs(rb - radius) < band)):
        breaks = []
        if disc[e] > 0:
            sq = np.sqrt(disc[e])
            breaks += [t for t in ((-B[e] - sq) / (2 * A[e]), (-B[e] + sq) / (2 * A[e])) if 0 < t < 1]
        if 0 < radius - ra[e] < band:
            breaks.append(0.0)
        if 0 < radius - rb[e] < band:
            breaks.append(1.0)
        if breaks:
            s, w = graded_line_rule(order, breaks)
            groups.append((np.array([e]), s, w))
            plain[e] = False
    s, w = line_rule(order)
    groups.append((np.flatnonzero(plain), s, w))
    return groups


def _edge_integrate(pa, pb, integrand, radius, order):
    """``int_0^1 integrand(pa + s (pb - pa), s) ds`` for every edge."""
    out = None
    for ids, s, w in _edge_rule(pa, pb, radius, order):
        if not len(ids):
            continue
        pts = pa[ids, None, :] + s[None, :, None] * (pb - pa)[ids, None, :]
        vals = integrand(pts, np.broadcast_to(s, pts.shape[:2]))
        res = np.einsum("eq...,q->e...", vals, w)
        if out is None:
            out = np.zeros((len(pa),) + res.shape[1:])
        out[ids] = res
    return out


def _triangle_moments(mesh, X, quad_order):
    """Exact-geometry moments of ``X`` on every triangle.

    Returns ``(V, K)`` with ``V[t, i] = int_T X psi_i dx`` and
    ``K[t] = int_T X X^T dx``. Area integrals are turned into boundary fluxes
    (``div F = integrand``) so only line integrals are approximated; those are
    graded toward the cutoff circle, where the field has a thin layer.
    """
    nt = mesh.n_triangles
    p = mesh.corners
    V = np.zeros((nt, 3, 2))
    Sbar = np.zeros(nt)
    K3 = np.zeros((nt, 3))
    order = 2 * quad_order + 3

    def integrand(pts, s):
        S = X.stream(pts)
        F0 = X.stream_flux(pts)
        F2 = X.second_moment_flux(pts)
        return np.concatenate([
            (S * (1 - s))[..., None], (S * s)[..., None], F0, F2.reshape(F2.shape[:-2] + (6,))
        ], axis=-1)

    for k in range(3):
        a, b = k, (k + 1) % 3
        pa, pb = p[:, a], p[:, b]
        d = pb - pa
        nrm = np.stack([d[:, 1], -d[:, 0]], axis=-1)  # |e| * outward normal
        I = _edge_integrate(pa, pb, integrand, X.radius, order)
        V[:, a] -= I[:, 0, None] * d
        V[:, b] -= I[:, 1, None] * d
        Sbar += np.einsum("ed,ed->e", I[:, 2:4], nrm)
        K3 += np.einsum("ecd,ed->ec", I[:, 4:].reshape(nt, 3, 2), nrm)

    g = mesh.basis_gradients
    V += Sbar[:, None, None] * np.stack([-g[..., 1], g[..., 0]], axis=-1)
    # X X^T = phi^2 [[x2^2, -x1 x2], [-x1 x2, x1^2]]
    K = np.stack([np.stack([K3[:, 2], -K3[:, 1]], -1), np.stack([-K3[:, 1], K3[:, 0]], -1)], -2)
    return V, K


def assemble_weighted_stiffness(mesh, X, quad_order=DEFAULT_QUAD_ORDER):
    """``(A_X)_ij = (grad psi_j . X, grad psi_i . X)``.

    Per triangle this is ``g_i^T K g_j`` with ``K = int_T X X^T``, which keeps
    every element block symmetric positive semidefinite.
    """
    if quad_order < 2:
        raise ValueError("weighted stiffness needs quad_order >= 2")
    _, K = _triangle_moments(mesh, X, quad_order)
    # K is a Gram integral; clip rounding-level negative eigenvalues
    lam, Q = np.linalg.eigh(K)
    K = np.einsum("tab,tb,tcb->tac", Q, np.maximum(lam, 0.0), Q)
    g = mesh.basis_gradients
    local = np.einsum("tia,tab,tjb->tij", g, K, g)
    local = 0.5 * (local + local.transpose(0, 2, 1))
    return _scatter(mesh, local)


def assemble_weighted_stiffness_direct(mesh, X, quad_order=DEFAULT_QUAD_ORDER):
    """Plain per-triangle quadrature of ``A_X`` (cross-check only)."""
    bary, w = triangle_rule(quad_order)
    Xq = X(mesh.quadrature_points(bary))
    K = np.einsum("q,tqa,tqb->tab", w, Xq, Xq) * mesh.areas[:, None, None]
    g = mesh.basis_gradients
    local = np.einsum("tia,tab,tjb->tij", g, K, g)
    return _scatter(mesh, 0.5 * (local + local.transpose(0, 2, 1)))


def assemble_noise_convection(mesh, X, quad_order=DEFAULT_QUAD_ORDER):
    """``(C_X)_ij = (grad psi_j . X, psi_i)``; general (non-symmetric) matrix."""
    if quad_order < 3:
        raise ValueError("noise convection needs quad_order >= 3")
    V, _ = _triangle_moments(mesh, X, quad_order)
    local = np.einsum("tia,tja->tij", V, mesh.basis_gradients)
    return _scatter(mesh, local)


def assemble_noise_convection_direct(mesh, X, quad_order=DEFAULT_QUAD_ORDER):
    """Plain per-triangle quadrature of ``(grad psi_j . X, psi_i)``.

    Used as an independent cross-check of :func:`assemble_noise_convection`.
    """
    bary, w = triangle_rule(quad_order)
    Xq = X(mesh.quadrature_points(bary))
    V = np.einsum("q,qi,tqa->tia", w, bary, Xq) * mesh.areas[:, None, None]
    local = np.einsum("tia,tja->tij", V, mesh.basis_gradients)
    return _scatter(mesh, local)


def _check_nonlinear_order(quad_order):
    if quad_order < 4:
        raise ValueError("the cubic nonlinearity needs quad_order >= 4 for exactness")


def assemble_nonlinear_load(mesh, u, quad_order=DEFAULT_QUAD_ORDER):
    """Vector with entries ``int (u^3 - u) psi_i dx``."""
    _check_nonlinear_order(quad_order)
    bary, w = triangle_rule(quad_order)
    uq = np.asarray(u, dtype=float)[mesh.triangles] @ bary.T  # (nt, nq)
    f = uq**3 - uq
    local = ((f * w) @ bary) * mesh.areas[:, None]
    return _scatter_vector(mesh, local)


def assemble_nonlinear_jacobian(mesh, u, quad_order=DEFAULT_QUAD_ORDER):
    """Matrix with entries ``int (3 u^2 - 1) psi_j psi_i dx``."""
    _check_nonlinear_order(quad_order)
    return _scatter(mesh, _jacobian_blocks(mesh, u, quad_order))


def _jacobian_blocks(mesh, u, quad_order):
    bary, w = triangle_rule(quad_order)
    uq = np.asarray(u, dtype=float)[mesh.triangles] @ bary.T
    fp = (3.0 * uq**2 - 1.0) * w
    return np.einsum("tq,qi,qj->tij", fp, bary, bary) * mesh.areas[:, None, None]


class ElementScatter:
    """Fixed-pattern scatter from element blocks to CSR data.

    Lets the Newton loop refresh the Jacobian values without rebuilding the
    sparsity structure.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        n = mesh.n_vertices
        t = mesh.triangles
        rows = np.repeat(t, 3, axis=1).ravel()
        cols = np.tile(t, (1, 3)).ravel()
        keys = rows * n + cols
        # CSR order is row-major with sorted columns, i.e. sorted keys.
        uniq = np.unique(keys)
        self.slot = np.searchsorted(uniq, keys)
        self.indices = uniq % n
        self.indptr = np.searchsorted(uniq // n, np.arange(n + 1))
        self.shape = (n, n)

    def matrix(self, local):
        data = np.bincount(self.slot, weights=local.ravel(), minlength=len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


@dataclass(frozen=True, eq=False)
class Operators:
    """Immutable bundle of assembled operators on one mesh."""

    mesh: object
    M: sp.csr_matrix
    A: sp.csr_matrix
    AX: sp.csr_matrix
    CX: sp.csr_matrix
    X: VectorFieldX
    quad_order: int = DEFAULT_QUAD_ORDER

    @cached_property
    def ones_mass(self):
        """``M @ 1``: the basis-integral vector."""
        return np.asarray(self.M.sum(axis=1)).ravel()

    def load(self, u):
        return assemble_nonlinear_load(self.mesh, u, max(self.quad_order, 4))

    def jacobian(self, u):
        return assemble_nonlinear_jacobian(self.mesh, u, max(self.quad_order, 4))


def assemble_operators(mesh, X=None, quad_order=DEFAULT_QUAD_ORDER):
    """Assemble ``M``, ``A``, ``A_X`` and ``C_X`` on ``mesh``."""
    X = VectorFieldX() if X is None else X
    return Operators(
        mesh=mesh,
        M=assemble_mass(mesh),
        A=assemble_stiffness(mesh),
        AX=assemble_weighted_stiffness(mesh, X, quad_order),
        CX=assemble_noise_convection(mesh, X, max(quad_order, 3)),
        X=X,
        quad_order=quad_order,
    )
