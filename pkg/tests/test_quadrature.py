import numpy as np
import pytest

from divdiv.quadrature import MAX_DEGREE, edge_rule, triangle_rule
from oracles import triangle_monomial_integral


def test_triangle_spot_values():
    r = triangle_rule(4)
    x, y = r.points.T
    assert r.weights.sum() == pytest.approx(0.5, abs=1e-15)
    assert r.weights @ x == pytest.approx(1 / 6, abs=1e-15)
    assert r.weights @ (x**2 * y) == pytest.approx(1 / 60, abs=1e-15)


def test_edge_spot_values():
    r = edge_rule(5)
    assert r.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert r.weights @ r.points == pytest.approx(0.5, abs=1e-15)
    assert r.weights @ r.points**5 == pytest.approx(1 / 6, abs=1e-15)


@pytest.mark.parametrize("degree", range(1, MAX_DEGREE + 1))
def test_triangle_exactness_sweep(degree):
    r = triangle_rule(degree)
    assert np.all(r.weights > 0)
    x, y = r.points.T
    assert np.all((x >= 0) & (y >= 0) & (x + y <= 1))
    for p in range(degree + 1):
        for q in range(degree + 1 - p):
            exact = triangle_monomial_integral(p, q)
            assert abs(r.weights @ (x**p * y**q) - exact) <= 1e-13 * exact


@pytest.mark.parametrize("degree", range(0, 30))
def test_edge_exactness_sweep(degree):
    r = edge_rule(degree)
    assert np.all(r.weights > 0)
    assert r.exact_degree >= degree
    for p in range(degree + 1):
        assert abs(r.weights @ r.points**p - 1 / (p + 1)) <= 1e-13 / (p + 1)


def test_unsupported_degree():
    with pytest.raises(ValueError):
        triangle_rule(0)
    with pytest.raises(ValueError):
        triangle_rule(MAX_DEGREE + 1)
    with pytest.raises(ValueError):
        edge_rule(-1)
