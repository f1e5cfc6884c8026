import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import polynomial as P

from divdiv.jets import Jet4, polar_angle
from divdiv.problems import ALPHA, OMEGA, example1, example1_closed_form, example2, example3, root_residual
from oracles import random_lshape_points, random_square_points, richardson_derivative, u_example3


def test_example1_spot_values():
    p = np.array([[0.5, 0.5]])
    e = example1()
    assert e.u(p)[0] == pytest.approx(0.00390625, abs=1e-17)
    np.testing.assert_allclose(e.sigma(p)[0], [1 / 16, 0.0, 1 / 16], atol=1e-15)
    assert e.f(p)[0] == pytest.approx(5.0, abs=1e-13)


def test_example1_jet_matches_closed_form():
    pts = random_square_points(50, seed=2, margin=0.0)
    ref = example1_closed_form(pts)
    e = example1()
    np.testing.assert_allclose(e.u(pts), ref["u"], rtol=1e-12, atol=1e-16)
    np.testing.assert_allclose(e.sigma(pts), ref["sigma"], rtol=1e-11, atol=1e-14)
    np.testing.assert_allclose(e.f(pts), ref["f"], rtol=1e-11, atol=1e-12)


def test_example2_is_example1():
    assert example2() is example1()


def test_example3_root_and_boundary():
    assert root_residual() < 1e-12
    assert OMEGA == pytest.approx(1.5 * np.pi)
    e = example3()
    assert e.u(np.array([[1.0, 0.3]]))[0] == 0.0
    with pytest.raises(ValueError):
        e.u(np.array([[0.0, 0.0]]))


@pytest.mark.parametrize("problem", [example1, example3])
def test_clamped_boundary(problem):
    e = problem()
    t = np.linspace(0.05, 0.95, 7)
    if e.domain == "square":
        edges = [(np.c_[t, 0 * t], (0, -1)), (np.c_[t, 0 * t + 1], (0, 1)), (np.c_[0 * t, t], (-1, 0)), (np.c_[0 * t + 1, t], (1, 0))]
    else:
        edges = [
            (np.c_[-1 + 0 * t, 2 * t - 1], (-1, 0)),
            (np.c_[2 * t - 1, 1 + 0 * t], (0, 1)),
            (np.c_[t, 0 * t], (0, -1)),  # reentrant edge along the positive x axis
            (np.c_[0 * t, -t], (1, 0)),  # reentrant edge along the negative y axis
            (np.c_[-t, -1 + 0 * t], (0, -1)),
            (np.c_[1 + 0 * t, t], (1, 0)),
        ]
    for pts, n in edges:
        assert np.abs(e.u(pts)).max() < 1e-12
        assert np.abs(e.grad(pts) @ np.array(n, dtype=float)).max() < 1e-12


def test_example3_hessian_against_central_differences():
    p = np.array([-0.5, 0.5])
    h = 1e-3
    hess = example3().hessian(p[None])[0]

    def u(x, y):
        return example3().u(np.array([[x, y]]))[0]

    # fourth-order central stencils
    c = np.array([1, -8, 8, -1]) / 12
    off = np.array([-2, -1, 1, 2])

    def d1x(x, y):
        return sum(ci * u(x + o * h, y) for ci, o in zip(c, off)) / h

    def d1y(x, y):
        return sum(ci * u(x, y + o * h) for ci, o in zip(c, off)) / h

    c2 = np.array([-1, 16, -30, 16, -1]) / 12
    off2 = np.arange(-2, 3)
    uxx = sum(ci * u(p[0] + o * h, p[1]) for ci, o in zip(c2, off2)) / h**2
    uyy = sum(ci * u(p[0], p[1] + o * h) for ci, o in zip(c2, off2)) / h**2
    uxy = sum(ci * d1y(p[0] + o * h, p[1]) for ci, o in zip(c, off)) / h
    np.testing.assert_allclose(hess, [uxx, uxy, uyy], rtol=1e-6)
    assert d1x(*p) == pytest.approx(example3().grad(p[None])[0, 0], rel=1e-6)


def test_trace_of_sigma_matches_independent_laplacian():
    for x, y in random_lshape_points(5, seed=4):
        lap = richardson_derivative(u_example3, x, y, 2, 0) + richardson_derivative(u_example3, x, y, 0, 2)
        s = example3().sigma(np.array([[x, y]]))[0]
        assert s[0] + s[2] == pytest.approx(-float(lap), rel=1e-10)


def test_evaluation_shapes_and_chunks():
    pts = random_square_points(7 * 11, seed=0).reshape(7, 11, 2)
    e = example1()
    assert e.u(pts).shape == (7, 11)
    assert e.sigma(pts).shape == (7, 11, 3)
    d = e.all_derivatives(pts)
    assert len(d) == 15 and d[(4, 0)].shape == (7, 11)


# ---------------------------------------------------------------- jet engine
def test_jet_spot_values():
    X, Y = Jet4.variables(np.array(1.0), np.array(2.0))
    assert (X * X * Y).derivative(1, 1) == pytest.approx(2.0)
    X, Y = Jet4.variables(np.array(0.0), np.array(0.0))
    np.testing.assert_allclose(X.sin().c[:, 0], [0, 1, 0, -1 / 6, 0], atol=1e-16)
    X, Y = Jet4.variables(np.array(1.0), np.array(0.0))
    r = (X * X + Y * Y).power(0.5 * (1 + ALPHA))
    assert r.derivative(1, 0) == pytest.approx(1 + ALPHA, rel=1e-14)


def test_jet_order_limit():
    X, _ = Jet4.variables(np.array(0.3), np.array(0.1))
    with pytest.raises(ValueError):
        X.derivative(3, 2)


poly_coeffs = st.lists(st.floats(-3, 3), min_size=15, max_size=15)
points = st.tuples(st.floats(-2, 2), st.floats(-2, 2))


@settings(max_examples=40, deadline=None)
@given(poly_coeffs, points)
def test_jet_is_exact_on_quartics(coeffs, pt):
    C = np.zeros((5, 5))
    k = 0
    for i in range(5):
        for j in range(5 - i):
            C[i, j] = coeffs[k]
            k += 1
    X, Y = Jet4.variables(np.array(pt[0]), np.array(pt[1]))
    p = Jet4.constant(0.0)
    for i in range(5):
        for j in range(5 - i):
            p = p + X**i * Y**j * C[i, j]
    for i in range(5):
        for j in range(5 - i):
            D = P.polyder(P.polyder(C, i, axis=0), j, axis=1)
            expect = P.polyval2d(pt[0], pt[1], D)
            assert p.derivative(i, j) == pytest.approx(expect, rel=1e-10, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(points)
def test_jet_function_identities(pt):
    X, Y = Jet4.variables(np.array(pt[0]), np.array(pt[1]))
    z = X * Y + X * 0.5
    one = z.sin() * z.sin() + z.cos() * z.cos()
    np.testing.assert_allclose(one.c.ravel(), np.eye(1, 25).ravel(), atol=1e-12)
    e = z.exp() * (-z).exp()
    np.testing.assert_allclose(e.c.ravel(), np.eye(1, 25).ravel(), atol=1e-10)
    w = (X * X + 1.0)
    np.testing.assert_allclose((w.reciprocal() * w).c.ravel(), np.eye(1, 25).ravel(), atol=1e-12)
    np.testing.assert_allclose(X.atan().derivative(1, 0), 1 / (1 + pt[0] ** 2), rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.0, 1.5 * np.pi))
def test_polar_angle_branch_and_derivatives(r, theta):
    x, y = r * np.cos(theta), r * np.sin(theta)
    X, Y = Jet4.variables(np.array(x), np.array(y))
    th = polar_angle(X, Y)
    assert th.value == pytest.approx(theta, abs=1e-12)
    assert 0.0 <= th.value < 2 * np.pi
    # d theta = (-y dx + x dy) / r^2
    assert th.derivative(1, 0) == pytest.approx(-y / r**2, rel=1e-10, abs=1e-12)
    assert th.derivative(0, 1) == pytest.approx(x / r**2, rel=1e-10, abs=1e-12)
