import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochch.experiment import fit_orders
from stochch.mesh import build_uniform_mesh, gradients, prolongate
from stochch.noise import coarsen, generate_path
from stochch.postproc import extract_zero_level_set, mean_field, values_on_segments

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@given(n=st.integers(1, 12), a=finite, b=finite, c=finite)
def test_gradients_of_affine_fields_are_exact(n, a, b, c):
    m = build_uniform_mesh(n)
    u = a * m.vertices[:, 0] + b * m.vertices[:, 1] + c
    assert np.allclose(gradients(m, u), [a, b], atol=1e-11 * (1 + abs(a) + abs(b) + abs(c)))


@given(errors=arrays(float, st.integers(2, 6), elements=st.floats(1e-8, 1e3)),
       scale=st.floats(1e-3, 1e3))
def test_orders_are_scale_invariant(errors, scale):
    assert np.allclose(fit_orders(errors), fit_orders(errors * scale), atol=1e-9)


@given(k=st.sampled_from([1, 2, 4, 8]), seed=st.integers(0, 2**32), m=st.integers(0, 50))
@settings(max_examples=30)
def test_coarse_increments_sum_to_fine_increments(k, seed, m):
    p = generate_path(seed, 0.0064, 1e-4, m)
    c = coarsen(p, k * 1e-4)
    assert np.allclose(c, p.increments.reshape(-1, k).sum(axis=1), rtol=0, atol=1e-15)


@given(st.lists(arrays(float, 9, elements=finite), min_size=1, max_size=5), finite)
def test_mean_field_is_linear(fields, s):
    scaled = mean_field([s * f for f in fields])
    assert np.allclose(scaled, s * mean_field(fields), atol=1e-9 * (1 + abs(s)) * 10)


@given(arrays(float, 25, elements=st.floats(-1, 1, allow_nan=False)))
@settings(max_examples=50)
def test_level_set_endpoints_are_zeros(f):
    m = build_uniform_mesh(4)
    ls = extract_zero_level_set(f, m)
    if len(ls):
        assert np.abs(values_on_segments(ls, f, m)).max() < 1e-12
        assert np.all(np.abs(ls.segments) <= 1.0 + 1e-15)


@given(arrays(float, 9, elements=finite))
def test_prolongation_preserves_nodal_values(u):
    coarse, fine = build_uniform_mesh(2), build_uniform_mesh(6)
    uf = prolongate(coarse, fine, u)
    # coarse vertex (i, j) sits at fine index (3j)(7) + 3i
    idx = [(3 * j) * 7 + 3 * i for j in range(3) for i in range(3)]
    assert np.allclose(uf[idx], u, atol=1e-12 * (1 + np.abs(u).max()))
