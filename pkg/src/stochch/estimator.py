"""Scikit-learn style front end to the solver.

``fit`` builds the mesh and operators, ``transform`` maps a batch of initial
nodal fields to their states at ``T``, one Brownian path per sample.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .assembly import DEFAULT_QUAD_ORDER, assemble_operators
from .experiment import mesh_divisions
from .mesh import build_uniform_mesh
from .noise import coarsen, generate_path
from .stepper import SchemeParams, Stepper, project_initial, run_path


class CahnHilliardSolver(TransformerMixin, BaseEstimator):
    """Mixed P1 solver for the stochastic Cahn-Hilliard equation.

    Parameters
    ----------
    epsilon : float
        Interface width.
    delta : float
        Noise intensity; 0 gives the deterministic scheme.
    tau : float
        Time step; must divide ``T``.
    T : float
        Final time.
    h : float
        Mesh size of the uniform triangulation of [-1, 1]^2, ``2/h`` integer.
    tau_ref : float or None
        Step of the generated Brownian path (defaults to ``tau``). Paths are
        coarsened to ``tau``, so runs with different ``tau`` sharing
        ``tau_ref`` and ``random_state`` are driven by the same path.
    random_state : int
        Master seed; sample ``i`` of :meth:`transform` uses realization ``i``.
    quad_order, newton_tol, newton_max_iter, linear_solver
        Solver controls, see :class:`~stochch.stepper.Stepper`.

    Attributes
    ----------
    mesh_ : Mesh
    operators_ : Operators
    n_features_in_ : int
        Number of mesh vertices.
    """

    def __init__(self, epsilon=0.1, delta=5.0, tau=8e-4, T=0.016, h=2 / 32, tau_ref=None,
                 random_state=0, quad_order=DEFAULT_QUAD_ORDER, newton_tol=1e-10,
                 newton_max_iter=25, linear_solver="krylov"):
        self.epsilon = epsilon
        self.delta = delta
        self.tau = tau
        self.T = T
        self.h = h
        self.tau_ref = tau_ref
        self.random_state = random_state
        self.quad_order = quad_order
        self.newton_tol = newton_tol
        self.newton_max_iter = newton_max_iter
        self.linear_solver = linear_solver

    def _params(self):
        return SchemeParams(epsilon=self.epsilon, delta=self.delta, tau=self.tau, T=self.T,
                            newton_tol=self.newton_tol, newton_max_iter=self.newton_max_iter)

    def fit(self, X=None, y=None):
        """Assemble operators; ``X`` and ``y`` are ignored."""
        params = self._params()
        params.n_steps  # raises when tau does not divide T
        if self.linear_solver not in ("krylov", "direct"):
            raise ValueError(f"unknown linear_solver {self.linear_solver!r}")
        self.mesh_ = build_uniform_mesh(mesh_divisions(self.h))
        self.operators_ = assemble_operators(self.mesh_, quad_order=self.quad_order)
        self.params_ = params
        self.n_features_in_ = self.mesh_.n_vertices
        return self

    def project(self, func):
        """L2 projection of a pointwise function ``func(points)`` onto the mesh."""
        check_is_fitted(self)
        return project_initial(self.operators_, func)

    def path_increments(self, realization=0):
        """Wiener increments of one realization on the ``tau`` grid."""
        tau_ref = self.tau if self.tau_ref is None else self.tau_ref
        path = generate_path(self.random_state, self.T, tau_ref, realization)
        return coarsen(path, self.tau)

    def simulate(self, u0, realization=0, increments=None, **kwargs):
        """Run one realization from nodal data ``u0``; returns a Trajectory.

        Extra keyword arguments go to :func:`~stochch.stepper.run_path`.
        """
        check_is_fitted(self)
        u0 = self._check_field(u0)
        if increments is None:
            increments = self.path_increments(realization)
        stepper = Stepper(self.operators_, self.params_, linear_solver=self.linear_solver)
        return run_path(u0, increments, self.params_, self.operators_, stepper=stepper, **kwargs)

    def transform(self, X):
        """Final states ``u(T)`` for a batch of initial nodal fields.

        Parameters
        ----------
        X : array-like, shape (n_samples, n_vertices)

        Returns
        -------
        ndarray, shape (n_samples, n_vertices)
        """
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        stepper = Stepper(self.operators_, self.params_, linear_solver=self.linear_solver)
        out = np.empty_like(X)
        for i, u0 in enumerate(X):
            run = run_path(u0, self.path_increments(i), self.params_, self.operators_, stepper=stepper)
            out[i] = run.u
        return out

    def _check_field(self, u):
        u = check_array(np.asarray(u, dtype=float).reshape(1, -1)).ravel()
        if len(u) != self.n_features_in_:
            raise ValueError(f"field has {len(u)} values, expected {self.n_features_in_}")
        return u
