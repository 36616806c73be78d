"""Discrete inverse Laplacian, mesh-dependent H^-1 norm, and energy functionals."""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .mesh import DOMAIN_AREA
from .quadrature import triangle_rule


class NonZeroMeanInput(ValueError):
    """Raised when the inverse Laplacian receives a field with nonzero mean."""


def mass(ops, v):
    """``(v, 1)``."""
    return float(ops.ones_mass @ v)


def zero_mean_project(ops, v):
    """Subtract the mean ``(v, 1) / |D|`` from every coefficient."""
    v = np.asarray(v, dtype=float)
    return v - mass(ops, v) / DOMAIN_AREA


class InverseLaplacian:
    """Solver for ``A xi = M zeta`` on the zero-mean subspace.

    The singular Neumann stiffness matrix is bordered by one Lagrange
    multiplier row enforcing ``(xi, 1) = 0``; the factorization is built once
    and shared.
    """

    def __init__(self, ops):
        self.ops = ops
        c = ops.ones_mass
        n = len(c)
        K = sp.bmat([[ops.A, sp.csc_matrix(c[:, None])],
                     [sp.csr_matrix(c[None, :]), None]], format="csc")
        self._lu = splu(K)
        self._n = n

    def __call__(self, zeta, check=True, tol=1e-10):
        """Return ``xi = -Delta_h^{-1} zeta``.

        ``xi`` satisfies ``(grad xi, grad v) = (zeta, v)`` for all ``v``.
        """
        zeta = np.asarray(zeta, dtype=float)
        rhs = self.ops.M @ zeta
        if check:
            scale = np.linalg.norm(zeta) + 1e-300
            if abs(rhs.sum()) > tol * scale * max(1.0, np.abs(self.ops.ones_mass).sum()):
                raise NonZeroMeanInput(f"input mean {rhs.sum():.3e} violates solvability")
        sol = self._lu.solve(np.append(rhs, 0.0))
        return sol[: self._n]

    def inner(self, zeta, eta):
        """Discrete ``(zeta, eta)_{-1,h}`` after zero-mean projection."""
        z = zero_mean_project(self.ops, zeta)
        e = zero_mean_project(self.ops, eta)
        return float(z @ (self.ops.M @ self(e, check=False)))

    def norm(self, zeta):
        z = zero_mean_project(self.ops, zeta)
        xi = self(z, check=False)
        return float(np.sqrt(max(z @ (self.ops.M @ xi), 0.0)))


def inverse_laplacian(ops, zeta):
    return InverseLaplacian(ops)(zeta)


def h_minus1_norm(ops, zeta, solver=None):
    """``||zeta||_{-1,h}`` of the zero-mean part of ``zeta``."""
    return (solver or InverseLaplacian(ops)).norm(zeta)


def inverse_inequality_constant(ops, h=None):
    """Smallest ``C`` with ``||zeta|| <= C h^-1 ||zeta||_{-1,h}`` on zero-mean fields.

    The supremum of ``||zeta|| / ||zeta||_{-1,h}`` is ``sqrt(lambda_max)`` of
    the pencil ``A v = lambda M v``.
    """
    h = ops.mesh.h if h is None else h
    lam = eigsh(ops.A.tocsc(), k=1, M=ops.M.tocsc(), which="LM", return_eigenvectors=False)
    return float(h * np.sqrt(lam[0]))


def l2_norm(ops, v):
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(max(v @ (ops.M @ v), 0.0)))


def h1_seminorm(ops, v):
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(max(v @ (ops.A @ v), 0.0)))


def double_well(s):
    """``F(s) = (s^2 - 1)^2 / 4``."""
    return 0.25 * (s * s - 1.0) ** 2


def potential_integral(mesh, u, quad_order=4):
    """``int F(u_h) dx`` with the P1 field inside ``F`` (exact for order >= 4)."""
    bary, w = triangle_rule(max(quad_order, 4))
    uq = np.asarray(u, dtype=float)[mesh.triangles] @ bary.T
    return float((double_well(uq) @ w) @ mesh.areas)


def discrete_energy(ops, u, epsilon, quad_order=4):
    """``J(u_h) = int eps/2 |grad u_h|^2 + F(u_h)/eps dx``."""
    u = np.asarray(u, dtype=float)
    grad2 = float(u @ (ops.A @ u))
    return 0.5 * epsilon * grad2 + potential_integral(ops.mesh, u, quad_order) / epsilon
