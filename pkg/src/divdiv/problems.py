"""Manufactured clamped-plate solutions with derivatives up to order four.

Each problem exposes ``u``, its gradient and Hessian, the stress
``sigma = -hess u`` (components 11, 12, 22) and the load
``f = u_xxxx + 2 u_xxyy + u_yyyy``, all evaluated through :class:`Jet4`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .jets import Jet4, polar_angle

ALPHA = 0.544483736782464
OMEGA = 1.5 * np.pi
_CHUNK = 65536


@dataclass(frozen=True)
class Manufactured:
    """Exact solution defined by a jet expression ``expr(X, Y) -> Jet4``."""

    name: str
    domain: str
    expr: Callable[[Jet4, Jet4], Jet4]
    singular_point: tuple[float, float] | None = None

    def jet(self, points) -> Jet4:
        pts = np.asarray(points, dtype=float)
        X, Y = Jet4.variables(pts[..., 0], pts[..., 1])
        return self.expr(X, Y)

    def _derivs(self, points, orders) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, 2)
        out = np.empty((len(flat), len(orders)))
        for start in range(0, len(flat), _CHUNK):
            j = self.jet(flat[start : start + _CHUNK])
            for k, (a, b) in enumerate(orders):
                out[start : start + _CHUNK, k] = j.derivative(a, b)
        return out.reshape(pts.shape[:-1] + (len(orders),))

    def u(self, points) -> np.ndarray:
        return self._derivs(points, [(0, 0)])[..., 0]

    def grad(self, points) -> np.ndarray:
        return self._derivs(points, [(1, 0), (0, 1)])

    def hessian(self, points) -> np.ndarray:
        """Components (xx, xy, yy)."""
        return self._derivs(points, [(2, 0), (1, 1), (0, 2)])

    def sigma(self, points) -> np.ndarray:
        """Stress -hess u with components (11, 12, 22)."""
        return -self.hessian(points)

    def f(self, points) -> np.ndarray:
        d = self._derivs(points, [(4, 0), (2, 2), (0, 4)])
        return d[..., 0] + 2.0 * d[..., 1] + d[..., 2]

    def all_derivatives(self, points) -> dict[tuple[int, int], np.ndarray]:
        """Every partial derivative of order <= 4, keyed by (i, j)."""
        orders = [(i, j) for i in range(5) for j in range(5 - i)]
        vals = self._derivs(points, orders)
        return {o: vals[..., k] for k, o in enumerate(orders)}


def _example1_expr(X: Jet4, Y: Jet4) -> Jet4:
    return X**2 * Y**2 * (Y - 1.0) ** 2 * (1.0 - X) ** 2


def g_coefficients(alpha: float = ALPHA, omega: float = OMEGA) -> tuple[float, float]:
    am, ap = alpha - 1.0, alpha + 1.0
    g1 = np.sin(am * omega) / am - np.sin(ap * omega) / ap
    g2 = np.cos(am * omega) - np.cos(ap * omega)
    return g1, g2


def root_residual(alpha: float = ALPHA, omega: float = OMEGA) -> float:
    """|sin^2(alpha omega) - alpha^2 sin^2(omega)|."""
    return abs(np.sin(alpha * omega) ** 2 - alpha**2 * np.sin(omega) ** 2)


def _example3_expr(X: Jet4, Y: Jet4) -> Jet4:
    a = ALPHA
    g1, g2 = g_coefficients()
    theta = polar_angle(X, Y)
    am, ap = theta * (a - 1.0), theta * (a + 1.0)
    g = (am.cos() - ap.cos()) * g1 - (am.sin() / (a - 1.0) - ap.sin() / (a + 1.0)) * g2
    radial = (X * X + Y * Y).power(0.5 * (1.0 + a))
    return (1.0 - X * X) ** 2 * (1.0 - Y * Y) ** 2 * radial * g


@lru_cache(maxsize=None)
def example1() -> Manufactured:
    """u = x^2 y^2 (y - 1)^2 (1 - x)^2 on the unit square."""
    return Manufactured("example1", "square", _example1_expr)


def example2() -> Manufactured:
    """Example 1 again; only the mesh family differs."""
    return example1()


@lru_cache(maxsize=None)
def example3() -> Manufactured:
    """Corner singularity solution on the L-shape, theta in [0, 3 pi / 2]."""
    return Manufactured("example3", "lshape", _example3_expr, singular_point=(0.0, 0.0))


def example1_closed_form(points) -> dict[str, np.ndarray]:
    """Hand-expanded u, sigma and f for Example 1, independent of the jet engine.

    With ``a(x) = x^2 (1 - x)^2`` and ``b(y)`` likewise, ``u = a b``,
    ``sigma = -(a'' b, a' b', a b'')`` and ``f = a'''' b + 2 a'' b'' + a b''''``.
    """
    p = np.asarray(points, dtype=float)
    x, y = p[..., 0], p[..., 1]

    def parts(t):
        q = t * t * (1 - t) ** 2
        d1 = 2 * t * (1 - t) * (1 - 2 * t)
        d2 = 2 - 12 * t + 12 * t * t
        d4 = np.full_like(t, 24.0)
        return q, d1, d2, d4

    a, a1, a2, a4 = parts(x)
    b, b1, b2, b4 = parts(y)
    sigma = -np.stack([a2 * b, a1 * b1, a * b2], axis=-1)
    return {"u": a * b, "sigma": sigma, "f": a4 * b + 2 * a2 * b2 + a * b4}


PROBLEMS = {
    "square-uniform": example1,
    "square-nonuniform": example2,
    "lshape": example3,
}
