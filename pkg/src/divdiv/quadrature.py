"""Gauss rules on the reference edge [0, 1] and the reference triangle.

Triangle rules are tensor Gauss-Legendre rules pulled back through the
Duffy (collapsed coordinate) map, so any degree is available without
tabulated data and all weights are positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DEGREE = 20


@dataclass(frozen=True)
class QuadRule:
    """Points and weights of a quadrature rule on a reference cell.

    ``points`` has shape ``(n, 2)`` for the triangle and ``(n,)`` for
    the edge. Weights sum to the reference measure (1/2 and 1).
    """

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    def __len__(self) -> int:
        return len(self.weights)


def _gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of ``degree``."""
    if degree < 0:
        raise ValueError(f"degree must be non-negative, got {degree}")
    n = max(1, (degree + 2) // 2)
    s, w = _gauss01(n)
    s.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(s, w, 2 * n - 1)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadRule:
    """Collapsed Gauss rule on {x, y >= 0, x + y <= 1} exact to ``degree``.

    With x = u and y = v (1 - u), a monomial x^p y^q becomes
    u^p (1-u)^(q+1) v^q, so the u-direction needs one extra degree.
    """
    if not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"triangle rule degree must lie in [1, {MAX_DEGREE}], got {degree}")
    nu = (degree + 3) // 2
    nv = (degree + 2) // 2
    u, wu = _gauss01(nu)
    v, wv = _gauss01(nv)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu * (1.0 - u), wv)
    points = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    weights = W.ravel()
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadRule(points, weights, degree)
