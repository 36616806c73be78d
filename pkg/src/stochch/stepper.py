"""Fully discrete mixed P1 scheme: one realization at a time.

Each step solves, for ``(u, w) = (u^{n+1}, w^{n+1})``,

    [M + tau delta^2/2 A_X] u + tau A w = M u_n + delta dW C_X u_n
    M w - eps A u = N(u) / eps

by Newton's method on the coupled block system.
"""
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres, splu

from .assembly import ElementScatter, stiffness_blocks
from .discrete import InverseLaplacian, discrete_energy, mass
from .noise import n_steps
from .quadrature import triangle_rule

log = logging.getLogger(__name__)


class NewtonDiverged(RuntimeError):
    """Newton residual stayed above tolerance after the iteration budget."""

    def __init__(self, message, step=None, residuals=None):
        super().__init__(message)
        self.step = step
        self.residuals = residuals


class LinearSolveFailure(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class MeshConstraintWarning(UserWarning):
    pass


@dataclass
class SchemeParams:
    """Physical and solver parameters of one run.

    ``constraint_threshold`` is the warning level for the solvability
    indicator ``tau (eps^-3 + eps^-1 delta^4)``.
    """

    epsilon: float
    delta: float
    tau: float
    T: float
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    max_halvings: int = 5
    constraint_threshold: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.delta >= 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.T >= 0:
            raise ValueError(f"T must be nonnegative, got {self.T}")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")

    @property
    def constraint_indicator(self):
        return mesh_constraint_indicator(self.tau, self.epsilon, self.delta)

    @property
    def constraint_violated(self):
        return self.constraint_indicator > self.constraint_threshold

    @property
    def n_steps(self):
        return 0 if self.T == 0 else n_steps(self.T, self.tau)


def mesh_constraint_indicator(tau, epsilon, delta):
    """``tau * (eps^-3 + eps^-1 delta^4)``; small values guarantee solvability."""
    return tau * (epsilon**-3 + delta**4 / epsilon)


def project_initial(ops, u0, quad_order=6):
    """L2 projection of a pointwise function ``u0(points) -> values``."""
    mesh = ops.mesh
    bary, w = triangle_rule(max(quad_order, 4))
    vals = np.asarray(u0(mesh.quadrature_points(bary)), dtype=float)  # (nt, nq)
    local = ((vals * w) @ bary) * mesh.areas[:, None]
    b = np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    try:
        return splu(ops.M.tocsc()).solve(b)
    except RuntimeError as exc:  # singular factor
        raise LinearSolveFailure(f"mass matrix factorization failed: {exc}") from exc


def initial_chemical_potential(ops, u0, epsilon):
    """Solve ``M w = eps A u0 + N(u0) / eps``."""
    rhs = epsilon * (ops.A @ u0) + ops.load(u0) / epsilon
    return splu(ops.M.tocsc()).solve(rhs)


@dataclass
class StepDiagnostics:
    iterations: int
    residuals: list
    damping: list
    mass_drift: float

    @property
    def residual(self):
        return self.residuals[-1]


class Stepper:
    """Newton solver for one time step; owns per-realization scratch state.

    Operators are shared read-only between steppers. With
    ``linear_solver="krylov"`` each Newton correction is computed by GMRES
    preconditioned with the LU factors of an earlier Jacobian, which is
    refreshed whenever GMRES needs more than ``refactor_after`` iterations;
    ``"direct"`` factorizes the Jacobian at every Newton iteration.
    """

    def __init__(self, ops, params, linear_solver="krylov", refactor_after=8, gmres_rtol=1e-12):
        if linear_solver not in ("krylov", "direct"):
            raise ValueError(f"unknown linear_solver {linear_solver!r}")
        self.ops = ops
        self.params = params
        self.linear_solver = linear_solver
        self.refactor_after = refactor_after
        self.gmres_rtol = gmres_rtol
        p = params
        mesh = ops.mesh
        self.nv = mesh.n_vertices
        self.K = (ops.M + (p.tau * p.delta**2 / 2.0) * ops.AX).tocsr()
        self._tauA = (p.tau * ops.A).tocsr()
        self._epsA = (p.epsilon * ops.A).tocsr()
        self._scatter = ElementScatter(mesh)

        bary, w = triangle_rule(max(ops.quad_order, 4))
        self._bary_t = np.ascontiguousarray(bary.T)
        self._w = np.asarray(w)
        self._load_basis = bary * w[:, None]  # (nq, 3)
        self._outer = np.einsum("qi,qj->qij", bary, bary).reshape(len(w), 9)
        self._areas = mesh.areas
        self._tri = mesh.triangles
        self._tri_flat = mesh.triangles.ravel()

        # lower-left block -eps A - J(u)/eps lives on the full element pattern
        lower = self._scatter.matrix(-p.epsilon * stiffness_blocks(mesh))
        self._base = sp.bmat([[self.K, self._tauA], [lower, ops.M]], format="csr")
        self._base.sort_indices()
        self._jac_slots = self._locate_lower_left(lower)
        self._lu = None
        self.factorizations = 0
        self.krylov_iterations = 0

    def reset(self):
        """Drop the cached preconditioner so the next run starts fresh."""
        self._lu = None

    def _locate_lower_left(self, pattern):
        """Positions in the block CSR data array of the ``J(u)`` pattern."""
        base = self._base
        nv = self.nv
        slots = np.empty(pattern.nnz, dtype=np.int64)
        for r in range(nv):
            lo, hi = pattern.indptr[r], pattern.indptr[r + 1]
            blo, bhi = base.indptr[nv + r], base.indptr[nv + r + 1]
            slots[lo:hi] = blo + np.searchsorted(base.indices[blo:bhi], pattern.indices[lo:hi])
        if not np.array_equal(base.indices[slots], pattern.indices):
            raise RuntimeError("Jacobian sparsity pattern mismatch")
        return slots

    def _quad_values(self, u):
        return u[self._tri] @ self._bary_t  # (nt, nq)

    def load(self, u):
        """``N(u)``: same values as :func:`assemble_nonlinear_load`."""
        uq = self._quad_values(u)
        local = ((uq * uq * uq - uq) @ self._load_basis) * self._areas[:, None]
        return np.bincount(self._tri_flat, weights=local.ravel(), minlength=self.nv)

    def nonlinear_jacobian(self, u):
        uq = self._quad_values(u)
        local = (((3.0 * uq * uq - 1.0) * self._w) @ self._outer) * self._areas[:, None]
        return self._scatter.matrix(local)

    def residual(self, u, w, rhs1):
        ops, p = self.ops, self.params
        r1 = self.K @ u + self._tauA @ w - rhs1
        r2 = ops.M @ w - self._epsA @ u - self.load(u) / p.epsilon
        return np.concatenate([r1, r2])

    def jacobian(self, u, J=None):
        """Assembled block Jacobian in CSC format."""
        J = self.nonlinear_jacobian(u) if J is None else J
        data = self._base.data.copy()
        data[self._jac_slots] -= J.data / self.params.epsilon
        return sp.csr_matrix((data, self._base.indices, self._base.indptr),
                             shape=self._base.shape).tocsc()

    def _factorize(self, u, J):
        try:
            self._lu = splu(self.jacobian(u, J), permc_spec="MMD_AT_PLUS_A",
                            diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            self._lu = None
            raise LinearSolveFailure(f"Jacobian factorization failed: {exc}") from exc
        self.factorizations += 1

    def solve_correction(self, u, R):
        """Solve ``Jacobian(u) dz = R``."""
        J = self.nonlinear_jacobian(u)
        if self.linear_solver == "direct" or self._lu is None:
            self._factorize(u, J)
            return self._lu.solve(R)

        nv, eps, base = self.nv, self.params.epsilon, self._base

        def matvec(x):
            y = base @ x
            y[nv:] -= (J @ x[:nv]) / eps
            return y

        op = LinearOperator(base.shape, matvec=matvec, dtype=float)
        prec = LinearOperator(base.shape, matvec=self._lu.solve, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        dz, info = gmres(op, R, M=prec, rtol=self.gmres_rtol, atol=0.0,
                         restart=self.refactor_after, maxiter=1,
                         callback=cb, callback_type="pr_norm")
        self.krylov_iterations += count[0]
        if info != 0 or count[0] >= self.refactor_after:
            self._factorize(u, J)
            return self._lu.solve(R)
        return dz

    def step(self, u_n, w_n, dW, step_index=None, guess=None):
        """Advance one step; returns ``(u, w, StepDiagnostics)``.

        Newton starts from ``guess = (u, w)`` when given, else from
        ``(u_n, w_n)``.
        """
        ops, p = self.ops, self.params
        if not np.isfinite(dW):
            raise ValueError(f"Brownian increment must be finite, got {dW}")
        rhs1 = ops.M @ u_n
        if p.delta and dW:
            rhs1 = rhs1 + (p.delta * dW) * (ops.CX @ u_n)
        scale = max(float(np.linalg.norm(ops.M @ u_n)), np.finfo(float).tiny)
        tol = p.newton_tol * scale

        nv = self.nv
        z = np.concatenate([u_n, w_n] if guess is None else guess)
        R = self.residual(z[:nv], z[nv:], rhs1)
        res = [float(np.linalg.norm(R))]
        damping = []
        it = 0
        while res[-1] > tol:
            if it >= p.newton_max_iter:
                raise NewtonDiverged(
                    f"Newton residual {res[-1]:.3e} > {tol:.3e} after {it} iterations"
                    f" (indicator {p.constraint_indicator:.3g})",
                    step=step_index, residuals=res,
                )
            try:
                dz = self.solve_correction(z[:nv], R)
            except LinearSolveFailure as exc:
                exc.step = step_index
                raise
            lam = 1.0
            for _ in range(p.max_halvings + 1):
                z_new = z - lam * dz
                R_new = self.residual(z_new[:nv], z_new[nv:], rhs1)
                r_new = float(np.linalg.norm(R_new))
                if np.isfinite(r_new) and r_new < res[-1]:
                    break
                lam *= 0.5
            else:
                raise NewtonDiverged(
                    f"Newton stalled at residual {res[-1]:.3e} after {p.max_halvings} halvings",
                    step=step_index, residuals=res,
                )
            z, R = z_new, R_new
            res.append(r_new)
            damping.append(lam)
            it += 1

        u, w = z[:nv], z[nv:]
        drift = abs(float(ops.ones_mass @ (u - u_n)))
        return u, w, StepDiagnostics(it, res, damping, drift)


@dataclass
class Trajectory:
    """Result of one realization.

    ``snapshots`` maps step index to the stored ``u`` field.
    """

    params: SchemeParams
    u0: np.ndarray
    u: np.ndarray
    w: np.ndarray
    snapshots: dict = field(default_factory=dict)
    mass: np.ndarray = None
    energy: np.ndarray = None
    newton_iterations: np.ndarray = None
    newton_residuals: np.ndarray = None
    grad_sq_sum: float = 0.0
    sup_hm1_sq: float = None
    warnings: list = field(default_factory=list)

    @property
    def times(self):
        return np.arange(len(self.mass)) * self.params.tau

    def snapshot_times(self):
        return np.array(sorted(self.snapshots)) * self.params.tau


def _snapshot_steps(params, snapshot_times, store_every):
    N = params.n_steps
    steps = set()
    if store_every:
        steps.update(range(0, N + 1, int(store_every)))
    for t in snapshot_times or ():
        k = round(t / params.tau)
        if k < 0 or k > N or abs(k * params.tau - t) > 1e-9 * max(params.T, params.tau):
            raise ValueError(f"snapshot time {t} is not on the time grid of step {params.tau}")
        steps.add(k)
    return steps


def run_path(u0, increments, params, ops, w0=None, snapshot_times=None, store_every=None,
             track_energy=False, monitor_stability=False, stepper=None):
    """Apply :meth:`Stepper.step` over a whole Brownian path.

    ``increments`` must contain ``T / tau`` Wiener increments on the step grid.
    Mass is tracked at every step; energy and the discrete H^-1 norm only when
    requested.
    """
    N = params.n_steps
    increments = np.asarray(increments, dtype=float)
    if len(increments) != N:
        raise ValueError(f"expected {N} increments for T={params.T}, tau={params.tau}, got {len(increments)}")
    u = np.array(u0, dtype=float)
    w = initial_chemical_potential(ops, u, params.epsilon) if w0 is None else np.array(w0, dtype=float)
    if stepper is None:
        stepper = Stepper(ops, params)
    else:
        stepper.reset()
    keep = _snapshot_steps(params, snapshot_times, store_every)

    traj = Trajectory(params=params, u0=u.copy(), u=u, w=w)
    if params.constraint_violated:
        msg = (f"tau (eps^-3 + eps^-1 delta^4) = {params.constraint_indicator:.3g}"
               f" exceeds threshold {params.constraint_threshold}")
        traj.warnings.append(msg)
        warnings.warn(msg, MeshConstraintWarning, stacklevel=2)

    masses = np.empty(N + 1)
    masses[0] = mass(ops, u)
    energies = np.empty(N + 1) if track_energy else None
    if track_energy:
        energies[0] = discrete_energy(ops, u, params.epsilon)
    invlap = InverseLaplacian(ops) if monitor_stability else None
    sup_hm1 = invlap.norm(u) ** 2 if invlap else None
    iters = np.zeros(N, dtype=np.int64)
    resid = np.zeros(N)
    grad_sq = 0.0
    if 0 in keep:
        traj.snapshots[0] = u.copy()

    for n in range(N):
        try:
            u, w, diag = stepper.step(u, w, increments[n], step_index=n)
        except (NewtonDiverged, LinearSolveFailure) as exc:
            exc.step = n
            raise
        iters[n] = diag.iterations
        resid[n] = diag.residual
        masses[n + 1] = mass(ops, u)
        grad_sq += params.tau * float(u @ (ops.A @ u))
        if track_energy:
            energies[n + 1] = discrete_energy(ops, u, params.epsilon)
        if invlap is not None:
            sup_hm1 = max(sup_hm1, invlap.norm(u) ** 2)
        if n + 1 in keep:
            traj.snapshots[n + 1] = u.copy()

    traj.u, traj.w = u, w
    traj.mass = masses
    traj.energy = energies
    traj.newton_iterations = iters
    traj.newton_residuals = resid
    traj.grad_sq_sum = grad_sq
    traj.sup_hm1_sq = sup_hm1
    return traj
