from math import factorial

import numpy as np
import pytest

from stochch.quadrature import graded_line_rule, line_rule, triangle_rule


def monomial_integral(a, b):
    """Integral of x^a y^b over the unit right triangle, divided by its area."""
    return 2.0 * factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("order", [1, 2, 3, 4, 5, 6, 8, 10, 12])
def test_triangle_rule_exact_for_monomials(order):
    bary, w = triangle_rule(order)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(bary >= -1e-14) and np.allclose(bary.sum(axis=1), 1.0)
    x, y = bary[:, 1], bary[:, 2]
    for a in range(order + 1):
        for b in range(order + 1 - a):
            assert w @ (x**a * y**b) == pytest.approx(monomial_integral(a, b), rel=1e-12, abs=1e-15)


def test_triangle_rule_rejects_order_zero():
    with pytest.raises(ValueError):
        triangle_rule(0)


@pytest.mark.parametrize("order", [1, 3, 7, 11])
def test_line_rule_exact(order):
    s, w = line_rule(order)
    for k in range(order + 1):
        assert w @ s**k == pytest.approx(1.0 / (k + 1), rel=1e-13)


def test_graded_rule_is_exact_and_refines_toward_breaks():
    s, w = graded_line_rule(5, [0.3, 0.8], levels=20)
    for k in range(6):
        assert w @ s**k == pytest.approx(1.0 / (k + 1), rel=1e-12)
    # nodes accumulate at the breaks
    assert np.min(np.abs(s - 0.3)) < 1e-6
    assert np.min(np.abs(s - 0.8)) < 1e-6


def test_graded_rule_resolves_a_thin_layer():
    # integrand with a layer of width 1e-4 at 0.4
    f = lambda s: np.tanh((s - 0.4) / 1e-4)
    # w (log cosh(0.6/w) - log cosh(0.4/w)) with both arguments far in the linear regime
    exact = 0.2
    s, w = graded_line_rule(11, [0.4], levels=40)
    assert w @ f(s) == pytest.approx(exact, abs=1e-10)
