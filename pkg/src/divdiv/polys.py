"""Dense bivariate polynomials and piecewise polynomial fields.

A polynomial of degree ``d`` is stored as a coefficient array ``c`` of
shape ``(..., d+1, d+1)`` with ``c[..., i, j]`` multiplying ``x**i y**j``;
entries with ``i + j > d`` are zero. Leading axes are batch axes.

Piecewise fields use, on each triangle K, the scaled local coordinates
``xi = (x - c_K) / s_K`` where ``c_K`` is the centroid and ``s_K`` the
diameter. Keeping the variable O(1) keeps the monomial coefficients well
conditioned on small elements.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d


def exponents(degree: int) -> list[tuple[int, int]]:
    """Monomial exponents (i, j) with i + j <= degree, graded order."""
    return [(p - j, j) for p in range(degree + 1) for j in range(p + 1)]


def n_monomials(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


def pack(values: np.ndarray, degree: int) -> np.ndarray:
    """Scatter graded coefficient vectors (last axis) into square arrays."""
    out = np.zeros(values.shape[:-1] + (degree + 1, degree + 1), dtype=values.dtype)
    for k, (i, j) in enumerate(exponents(degree)):
        out[..., i, j] = values[..., k]
    return out


def unpack(coeffs: np.ndarray) -> np.ndarray:
    degree = coeffs.shape[-1] - 1
    return np.stack([coeffs[..., i, j] for i, j in exponents(degree)], axis=-1)


def polymul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of two unbatched coefficient arrays."""
    return convolve2d(a, b)


def polyder(c: np.ndarray, dx: int = 0, dy: int = 0) -> np.ndarray:
    """Partial derivative d^(dx+dy)/dx^dx dy^dy, keeping the array shape."""
    out = np.array(c, dtype=float, copy=True)
    for _ in range(dx):
        i = np.arange(1, out.shape[-2])
        shifted = np.zeros_like(out)
        shifted[..., :-1, :] = out[..., 1:, :] * i[:, None]
        out = shifted
    for _ in range(dy):
        j = np.arange(1, out.shape[-1])
        shifted = np.zeros_like(out)
        shifted[..., :, :-1] = out[..., :, 1:] * j[None, :]
        out = shifted
    return out


def polyval(c: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate unbatched-or-batched coefficients at broadcastable points.

    ``c`` has shape ``(..., d+1, d+1)``; ``x`` and ``y`` share a shape
    ``P``. Returns shape ``(..., *P)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = c.shape[-1] - 1
    xp = x[..., None] ** np.arange(d + 1)
    yp = y[..., None] ** np.arange(d + 1)
    lead = c.shape[:-2]
    flat = c.reshape(-1, d + 1, d + 1)
    vals = np.einsum("kij,...i,...j->k...", flat, xp, yp)
    return vals.reshape(lead + x.shape)


def pad_degree(c: np.ndarray, degree: int) -> np.ndarray:
    d = c.shape[-1] - 1
    if d == degree:
        return c
    if d > degree:
        if np.any(c[..., degree + 1:, :]) or np.any(c[..., :, degree + 1:]):
            raise ValueError("cannot truncate a polynomial with non-zero high-order terms")
        return c[..., : degree + 1, : degree + 1]
    out = np.zeros(c.shape[:-2] + (degree + 1, degree + 1))
    out[..., : d + 1, : d + 1] = c
    return out


class PiecewisePolynomial:
    """Discontinuous piecewise polynomial field on a triangulation.

    Parameters
    ----------
    coeffs : ndarray, shape (T, *components, d+1, d+1)
        Coefficients in the scaled local variable of each triangle.
    centers : ndarray, shape (T, 2)
    scales : ndarray, shape (T,)
    """

    def __init__(self, coeffs, centers, scales):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.centers = np.asarray(centers, dtype=float)
        self.scales = np.asarray(scales, dtype=float)
        if self.coeffs.shape[0] != self.centers.shape[0]:
            raise ValueError("coefficient and geometry arrays disagree on the element count")

    @property
    def degree(self) -> int:
        return self.coeffs.shape[-1] - 1

    @property
    def components(self) -> tuple[int, ...]:
        return self.coeffs.shape[1:-2]

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    def _local(self, elems, points):
        c = self.centers[elems]
        s = self.scales[elems]
        xi = (points[..., 0] - c[:, None, 0]) / s[:, None]
        eta = (points[..., 1] - c[:, None, 1]) / s[:, None]
        return xi, eta

    def evaluate(self, points: np.ndarray, elems=None) -> np.ndarray:
        """Values at ``points`` of shape (m, q, 2) on elements ``elems``.

        ``elems`` defaults to all elements in order. Returns an array of
        shape ``(m, *components, q)``.
        """
        if elems is None:
            elems = np.arange(len(self))
        elems = np.asarray(elems)
        xi, eta = self._local(elems, points)
        d = self.degree
        xp = xi[..., None] ** np.arange(d + 1)
        yp = eta[..., None] ** np.arange(d + 1)
        c = self.coeffs[elems]
        m = c.shape[0]
        flat = c.reshape(m, -1, d + 1, d + 1)
        vals = np.einsum("mkij,mqi,mqj->mkq", flat, xp, yp)
        return vals.reshape(c.shape[:-2] + (points.shape[1],))

    def derivative(self, dx: int = 0, dy: int = 0) -> "PiecewisePolynomial":
        factor = self.scales ** (-(dx + dy))
        c = polyder(self.coeffs, dx, dy)
        c *= factor.reshape((-1,) + (1,) * (c.ndim - 1))
        return PiecewisePolynomial(c, self.centers, self.scales)

    def gradient(self) -> "PiecewisePolynomial":
        gx = self.derivative(1, 0).coeffs
        gy = self.derivative(0, 1).coeffs
        return PiecewisePolynomial(np.stack([gx, gy], axis=1), self.centers, self.scales)

    def hessian(self) -> "PiecewisePolynomial":
        """Components ordered (xx, xy, yy)."""
        parts = [self.derivative(2, 0), self.derivative(1, 1), self.derivative(0, 2)]
        return PiecewisePolynomial(
            np.stack([p.coeffs for p in parts], axis=1), self.centers, self.scales
        )

    def __add__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        d = max(self.degree, other.degree)
        return PiecewisePolynomial(
            pad_degree(self.coeffs, d) + pad_degree(other.coeffs, d), self.centers, self.scales
        )

    def __neg__(self) -> "PiecewisePolynomial":
        return PiecewisePolynomial(-self.coeffs, self.centers, self.scales)

    def __sub__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        return self + (-other)

    def __mul__(self, scalar: float) -> "PiecewisePolynomial":
        return PiecewisePolynomial(self.coeffs * scalar, self.centers, self.scales)

    __rmul__ = __mul__


def local_vandermonde(xi: np.ndarray, eta: np.ndarray, degree: int) -> np.ndarray:
    """Rows of graded monomials evaluated at points; shape (..., n_monomials)."""
    return np.stack([xi**i * eta**j for i, j in exponents(degree)], axis=-1)
