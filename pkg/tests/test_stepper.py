import warnings

import numpy as np
import pytest

from stochch.noise import coarsen, generate_path
from stochch.postproc import smooth_initializer
from stochch.stepper import (
    MeshConstraintWarning,
    NewtonDiverged,
    SchemeParams,
    Stepper,
    initial_chemical_potential,
    mesh_constraint_indicator,
    project_initial,
    run_path,
)


@pytest.fixture(scope="module")
def u0_8(ops8):
    return project_initial(ops8, smooth_initializer)


def test_scheme_params_validation():
    with pytest.raises(ValueError):
        SchemeParams(epsilon=0.0, delta=1, tau=1e-3, T=1e-2)
    with pytest.raises(ValueError):
        SchemeParams(epsilon=0.1, delta=-1, tau=1e-3, T=1e-2)
    with pytest.raises(ValueError):
        SchemeParams(epsilon=0.1, delta=1, tau=3e-3, T=1e-2).n_steps


def test_constraint_indicator_formula():
    assert mesh_constraint_indicator(1e-4, 0.1, 0.0) == pytest.approx(1e-4 * 1e3)
    assert mesh_constraint_indicator(8e-4, 0.1, 5.0) == pytest.approx(8e-4 * (1e3 + 625 / 0.1))


def test_projection_reproduces_p1_functions(ops8):
    f = lambda x: 1.0 + 2.0 * x[..., 0] - x[..., 1]
    assert np.allclose(project_initial(ops8, f), ops8.mesh.interpolate(f), atol=1e-12)


def test_initial_chemical_potential_solves_defining_system(ops8, u0_8):
    w0 = initial_chemical_potential(ops8, u0_8, 0.1)
    assert np.allclose(ops8.M @ w0, 0.1 * ops8.A @ u0_8 + ops8.load(u0_8) / 0.1, atol=1e-13)


def test_pure_phase_is_a_fixed_point(ops8):
    p = SchemeParams(epsilon=0.1, delta=5.0, tau=1e-3, T=4e-3)
    one = np.ones(ops8.mesh.n_vertices)
    traj = run_path(one, [0.03, -0.02, 0.01, 0.0], p, ops8)
    assert np.allclose(traj.u, 1.0, atol=1e-13) and np.allclose(traj.w, 0.0, atol=1e-12)


def test_step_solves_the_scheme(ops8, u0_8):
    p = SchemeParams(epsilon=0.1, delta=5.0, tau=4e-4, T=4e-4)
    s = Stepper(ops8, p)
    w0 = initial_chemical_potential(ops8, u0_8, p.epsilon)
    dW = 0.013
    u, w, diag = s.step(u0_8, w0, dW)
    r1 = (ops8.M + p.tau * p.delta**2 / 2 * ops8.AX) @ u + p.tau * ops8.A @ w \
        - ops8.M @ u0_8 - p.delta * dW * ops8.CX @ u0_8
    r2 = ops8.M @ w - p.epsilon * ops8.A @ u - ops8.load(u) / p.epsilon
    scale = np.linalg.norm(ops8.M @ u0_8)
    assert np.linalg.norm(np.concatenate([r1, r2])) <= 1e-10 * scale
    assert diag.residual <= 1e-10 * scale
    assert diag.mass_drift < 1e-15


def test_newton_converges_quadratically(ops8, u0_8):
    p = SchemeParams(epsilon=0.1, delta=5.0, tau=8e-4, T=8e-4, newton_tol=1e-14)
    s = Stepper(ops8, p, linear_solver="direct")
    w0 = initial_chemical_potential(ops8, u0_8, p.epsilon)
    _, _, diag = s.step(u0_8, w0, 0.02)
    r = np.array(diag.residuals)
    # once in the asymptotic regime, r_{k+1} <~ C r_k^2
    k = np.argmax(r < 1e-3 * r[0])
    assert k >= 1 and r[k] < 50 * r[k - 1] ** 2 / r[0]


def test_krylov_and_direct_solvers_agree(ops8, u0_8):
    p = SchemeParams(epsilon=0.1, delta=5.0, tau=4e-4, T=3.2e-3)
    inc = coarsen(generate_path(3, p.T, 4e-4), 4e-4)
    a = run_path(u0_8, inc, p, ops8, stepper=Stepper(ops8, p, linear_solver="krylov"))
    b = run_path(u0_8, inc, p, ops8, stepper=Stepper(ops8, p, linear_solver="direct"))
    assert np.abs(a.u - b.u).max() < 1e-12


def test_mass_is_conserved_for_every_step(ops8, u0_8):
    p = SchemeParams(epsilon=0.1, delta=5.0, tau=8e-4, T=0.016)
    traj = run_path(u0_8, generate_path(9, p.T, p.tau).increments, p, ops8)
    assert np.abs(traj.mass - traj.mass[0]).max() < 1e-12


def test_deterministic_energy_decreases(ops8):
    u0 = project_initial(ops8, lambda x: 0.3 * np.sin(3 * x[..., 0]) * np.cos(2 * x[..., 1]))
    p = SchemeParams(epsilon=0.1, delta=0.0, tau=4e-4, T=8e-3)
    traj = run_path(u0, np.zeros(p.n_steps), p, ops8, track_energy=True)
    assert np.all(np.diff(traj.energy) <= 1e-12)
    assert traj.energy[-1] < traj.energy[0]


def test_reused_stepper_is_history_independent(ops8, u0_8):
    p = SchemeParams(epsilon=0.1, delta=5.0, tau=8e-4, T=3.2e-3)
    s = Stepper(ops8, p)
    inc1 = generate_path(1, p.T, p.tau).increments
    inc2 = generate_path(2, p.T, p.tau).increments
    first = run_path(u0_8, inc2, p, ops8, stepper=s).u
    run_path(u0_8, inc1, p, ops8, stepper=s)
    again = run_path(u0_8, inc2, p, ops8, stepper=s).u
    assert np.array_equal(first, again)


def test_snapshots_and_diagnostics(ops8, u0_8):
    p = SchemeParams(epsilon=0.1, delta=5.0, tau=8e-4, T=3.2e-3)
    traj = run_path(u0_8, np.zeros(4), p, ops8, snapshot_times=[0.0, 1.6e-3], store_every=None,
                    track_energy=True, monitor_stability=True)
    assert sorted(traj.snapshots) == [0, 2]
    assert np.allclose(traj.snapshot_times(), [0.0, 1.6e-3])
    assert len(traj.energy) == 5 and len(traj.times) == 5
    assert traj.sup_hm1_sq >= 0 and traj.grad_sq_sum > 0
    with pytest.raises(ValueError):
        run_path(u0_8, np.zeros(4), p, ops8, snapshot_times=[1e-4])


def test_wrong_increment_count_is_rejected(ops8, u0_8):
    p = SchemeParams(epsilon=0.1, delta=5.0, tau=8e-4, T=3.2e-3)
    with pytest.raises(ValueError):
        run_path(u0_8, np.zeros(3), p, ops8)
    with pytest.raises(ValueError):
        Stepper(ops8, p).step(u0_8, u0_8, np.nan)


def test_constraint_violation_warns(ops8, u0_8):
    p = SchemeParams(epsilon=0.1, delta=5.0, tau=8e-4, T=8e-4)
    with pytest.warns(MeshConstraintWarning):
        traj = run_path(u0_8, [0.0], p, ops8)
    assert traj.warnings
    quiet = SchemeParams(epsilon=0.1, delta=0.0, tau=1e-4, T=1e-4)
    with warnings.catch_warnings():
        warnings.simplefilter("error", MeshConstraintWarning)
        run_path(u0_8, [0.0], quiet, ops8)


def test_newton_failure_reports_step(ops8, u0_8):
    p = SchemeParams(epsilon=0.1, delta=5.0, tau=8e-4, T=3.2e-3, newton_max_iter=1, newton_tol=1e-16)
    with pytest.raises(NewtonDiverged) as info:
        run_path(u0_8, [0.01, 0.0, 0.0, 0.0], p, ops8)
    assert info.value.step == 0 and len(info.value.residuals) == 2
