import math

import numpy as np
import pytest

from jmfem.quadrature import MAX_ORDER, gauss_line, make_quadrature


def monomial_integral(a, b):
    # int over the reference triangle of x^a y^b
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def test_order_one_is_barycenter():
    rule = make_quadrature(1)
    np.testing.assert_allclose(rule.points, [[1 / 3, 1 / 3, 1 / 3]])
    np.testing.assert_allclose(rule.weights, [1.0])


@pytest.mark.parametrize("order", range(2, MAX_ORDER + 1))
def test_xy_integral(order):
    rule = make_quadrature(order)
    x = rule.physical_points(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    assert 0.5 * rule.weights @ (x[:, 0] * x[:, 1]) == pytest.approx(1 / 24, abs=1e-15)


@pytest.mark.parametrize("order", range(1, MAX_ORDER + 1))
def test_exactness_and_positivity(order):
    rule = make_quadrature(order)
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(rule.points >= -1e-15)
    x, y = rule.points[:, 1], rule.points[:, 2]
    for a in range(order + 1):
        for b in range(order + 1 - a):
            got = 0.5 * rule.weights @ (x**a * y**b)
            assert got == pytest.approx(monomial_integral(a, b), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("order", [0, MAX_ORDER + 1, 2.5])
def test_invalid_order(order):
    with pytest.raises(ValueError):
        make_quadrature(order)


def test_gauss_line():
    s, w = gauss_line(4)
    assert w.sum() == pytest.approx(1.0)
    assert w @ s**7 == pytest.approx(1 / 8)
