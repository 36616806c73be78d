import csv

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from stochch.mesh import build_uniform_mesh
from stochch.postproc import (
    TEST2_ELLIPSES,
    LevelSet,
    ellipse_signed_distance,
    energy_series,
    evaluate_p1,
    extract_zero_level_set,
    hausdorff_distance,
    mass_series,
    mean_field,
    signed_distance,
    signed_distance_initializer,
    values_on_segments,
    write_energy_csv,
    write_level_sets_csv,
    write_mass_csv,
)


def brute_force_distance(p, c, a, b):
    th = np.linspace(0, 2 * np.pi, 200001)
    d2 = (c[0] + a * np.cos(th) - p[0]) ** 2 + (c[1] + b * np.sin(th) - p[1]) ** 2
    t0 = th[np.argmin(d2)]
    res = minimize_scalar(lambda t: np.hypot(c[0] + a * np.cos(t) - p[0], c[1] + b * np.sin(t) - p[1]),
                          bounds=(t0 - 1e-4, t0 + 1e-4), method="bounded", options=dict(xatol=1e-13))
    return res.fun


@pytest.mark.parametrize("c,a,b", [((0.0, 0.0), 0.6, 0.2), ((-0.2, 0.0), 0.15, 0.45), ((0.3, -0.1), 0.5, 0.5)])
def test_closest_point_newton_matches_dense_sampling(c, a, b):
    rng = np.random.default_rng(4)
    axes = [c, [c[0] + a, c[1]], [c[0], c[1] + 0.5 * b], [c[0] + 0.3 * a, c[1]], [c[0] - 0.9, c[1]],
            [c[0], c[1] - 0.3 * b], [c[0], c[1] + 0.9]]
    pts = np.vstack([rng.uniform(-1, 1, (40, 2)), axes])
    d = ellipse_signed_distance(pts, c, a, b)
    for p, dp in zip(pts, d):
        assert abs(abs(dp) - brute_force_distance(p, c, a, b)) < 1e-10
        inside = ((p[0] - c[0]) / a) ** 2 + ((p[1] - c[1]) / b) ** 2 < 1
        assert (dp < 0) == inside or abs(dp) < 1e-14


def test_test2_initial_data_sign_and_saturation():
    u0 = signed_distance_initializer("test2", 0.01)
    v = u0(np.array([[0.0, 0.0], [0.99, 0.99]]))
    # d = -0.2 at the center; tanh saturates to -1 in double precision
    assert signed_distance(np.zeros(2), TEST2_ELLIPSES) == pytest.approx(-0.2)
    assert -1 <= v[0] < 0
    assert abs(v[1]) > 0.999


def test_test3_uses_minimum_of_two_ellipses():
    u0 = signed_distance_initializer("test3", 0.05)
    v = u0(np.array([[-0.2, 0.0], [0.2, 0.0], [0.0, 0.0], [0.0, 0.8]]))
    assert v[0] < 0 and v[1] < 0 and v[2] > 0 and v[3] > 0
    assert v[0] == pytest.approx(v[1])


def test_unknown_preset_and_bad_epsilon():
    with pytest.raises(ValueError):
        signed_distance_initializer("test9", 0.1)
    with pytest.raises(ValueError):
        signed_distance_initializer("test2", 0.0)


def test_mean_field_examples(rng):
    v = rng.standard_normal(10)
    assert np.array_equal(mean_field([v]), v)
    assert np.allclose(mean_field([v, -v]), 0.0)
    consts = [np.full(5, c) for c in (1.0, 2.0, 6.0)]
    assert np.allclose(mean_field(consts), 3.0)
    with pytest.raises(ValueError):
        mean_field([np.zeros(3), np.zeros(4)])
    with pytest.raises(ValueError):
        mean_field([])


def test_mean_field_commutes_with_mass(ops8, rng):
    fields = [rng.standard_normal(ops8.mesh.n_vertices) for _ in range(4)]
    assert mass_series(ops8, [mean_field(fields)])[0] == pytest.approx(np.mean(mass_series(ops8, fields)))


def test_uniform_sign_gives_empty_level_set():
    m = build_uniform_mesh(4)
    assert len(extract_zero_level_set(np.ones(m.n_vertices), m)) == 0


def test_line_is_reconstructed():
    m = build_uniform_mesh(8)
    ls = extract_zero_level_set(m.vertices[:, 0] - 0.1, m)
    assert len(ls) > 0
    assert np.allclose(ls.segments[..., 0], 0.1, atol=1e-14)
    assert np.all(np.abs(ls.segments) <= 1.0)


def test_vertex_zeros_are_tie_broken():
    m = build_uniform_mesh(4)
    ls = extract_zero_level_set(m.vertices[:, 0], m)  # zero exactly on a grid line
    assert len(ls) > 0
    assert np.abs(ls.segments[..., 0]).max() < 1e-12


def test_endpoints_are_zeros_of_the_interpolant():
    m = build_uniform_mesh(16)
    f = m.interpolate(signed_distance_initializer("test3", 0.05))
    ls = extract_zero_level_set(f, m)
    assert np.abs(values_on_segments(ls, f, m)).max() < 1e-12


def test_ellipse_level_set_within_h():
    m = build_uniform_mesh(32)
    f = m.interpolate(signed_distance_initializer("test2", 0.02))
    ls = extract_zero_level_set(f, m)
    assert np.abs(signed_distance(ls.points(), TEST2_ELLIPSES)).max() < m.h


def test_extraction_converges_at_first_order_or_better():
    circle = lambda x: np.hypot(x[..., 0], x[..., 1]) - 0.5
    errs = []
    for n in (8, 16, 32):
        m = build_uniform_mesh(n)
        ls = extract_zero_level_set(m.interpolate(circle), m)
        errs.append(np.abs(np.hypot(*ls.points().T) - 0.5).max())
    assert errs[1] < 0.6 * errs[0] and errs[2] < 0.6 * errs[1]


def test_hausdorff_distance():
    a = LevelSet(np.array([[[0.0, 0.0], [1.0, 0.0]]]))
    b = LevelSet(np.array([[[0.0, 0.3], [1.0, 0.3]]]))
    empty = LevelSet(np.empty((0, 2, 2)))
    assert hausdorff_distance(a, b) == pytest.approx(0.3)
    assert hausdorff_distance(a, a) == 0.0
    assert hausdorff_distance(empty, empty) == 0.0
    assert hausdorff_distance(a, empty) == np.inf


def test_evaluate_p1_reproduces_linear_functions():
    m = build_uniform_mesh(5)
    f = 1 + 2 * m.vertices[:, 0] - m.vertices[:, 1]
    pts = np.random.default_rng(1).uniform(-1, 1, (50, 2))
    assert np.allclose(evaluate_p1(m, f, pts), 1 + 2 * pts[:, 0] - pts[:, 1])


def test_series_of_constant_trajectory(ops8):
    fields = [np.full(ops8.mesh.n_vertices, 0.3)] * 3
    assert np.allclose(mass_series(ops8, fields), 1.2)
    e = energy_series(ops8, fields, 0.1)
    assert np.allclose(e, e[0])


def test_csv_emitters(tmp_path):
    ls = [LevelSet(np.array([[[0.0, 0.1], [0.2, 0.3]]]), time=0.5)]
    write_level_sets_csv(tmp_path / "ls.csv", ls)
    write_mass_csv(tmp_path / "m.csv", [0.0, 0.1], [1.0, 1.0])
    write_energy_csv(tmp_path / "e.csv", [0.0], [2.0], [0.1])
    lines = (tmp_path / "ls.csv").read_text().splitlines()
    assert lines[0].startswith("# stochch-levelset v")
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["t", "x1a", "x2a", "x1b", "x2b"]
    assert [float(v) for v in rows[1]] == [0.5, 0.0, 0.1, 0.2, 0.3]
    assert (tmp_path / "m.csv").read_text().splitlines()[1] == "t,mass"
    assert (tmp_path / "e.csv").read_text().splitlines()[1] == "t,energy,stderr"
