"""Truncated bivariate Taylor arithmetic up to total order 4.

A :class:`Jet4` holds ``c[i, j] = d^(i+j) f / dx^i dy^j / (i! j!)`` at an
expansion point, for ``i + j <= 4``, vectorized over a batch of points:
``c`` has shape ``(5, 5, *batch)``. Products are truncated convolutions;
elementary functions are composed through their univariate Taylor
coefficients, so every operation is exact on the retained orders.
"""

from __future__ import annotations

from math import factorial

import numpy as np

ORDER = 4
_PAIRS = [(i, j) for i in range(ORDER + 1) for j in range(ORDER + 1 - i)]


class Jet4:
    __slots__ = ("c",)
    __array_priority__ = 100

    def __init__(self, c: np.ndarray):
        self.c = c

    # -------------------------------------------------------- construction
    @classmethod
    def constant(cls, value, shape=()) -> "Jet4":
        c = np.zeros((ORDER + 1, ORDER + 1) + tuple(shape))
        c[0, 0] = value
        return cls(c)

    @classmethod
    def variables(cls, x0, y0) -> tuple["Jet4", "Jet4"]:
        """Jets of the coordinate functions x and y at the points (x0, y0)."""
        x0, y0 = np.broadcast_arrays(np.asarray(x0, dtype=float), np.asarray(y0, dtype=float))
        X = cls.constant(x0, x0.shape)
        Y = cls.constant(y0, y0.shape)
        X.c[1, 0] = 1.0
        Y.c[0, 1] = 1.0
        return X, Y

    @property
    def value(self) -> np.ndarray:
        return self.c[0, 0]

    def derivative(self, i: int, j: int) -> np.ndarray:
        """The partial derivative d^(i+j)/dx^i dy^j at the expansion point."""
        if i + j > ORDER:
            raise ValueError(f"order {i + j} exceeds the jet order {ORDER}")
        return self.c[i, j] * factorial(i) * factorial(j)

    # ------------------------------------------------------------ algebra
    def _lift(self, other) -> "Jet4":
        if isinstance(other, Jet4):
            return other
        return Jet4.constant(other, self.c.shape[2:])

    def __add__(self, other):
        o = self._lift(other)
        return Jet4(self.c + o.c)

    __radd__ = __add__

    def __neg__(self):
        return Jet4(-self.c)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet4):
            return Jet4(self.c * np.asarray(other, dtype=float))
        a, b = self.c, other.c
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        for i, j in _PAIRS:
            if not (np.any(a[i, j])):
                continue
            for k, l in _PAIRS:
                if i + j + k + l <= ORDER:
                    out[i + k, j + l] += a[i, j] * b[k, l]
        return Jet4(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet4):
            return self * other.reciprocal()
        return Jet4(self.c / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self._lift(other) * self.reciprocal()

    def __pow__(self, p):
        if isinstance(p, int) and p >= 0:
            out = Jet4.constant(1.0, self.c.shape[2:])
            for _ in range(p):
                out = out * self
            return out
        return self.power(float(p))

    # ---------------------------------------------------------- functions
    def compose(self, coeffs) -> "Jet4":
        """g(self) from the univariate Taylor coefficients g^(k)(a0)/k!, k = 0..4.

        ``coeffs`` is a sequence of arrays broadcastable to the batch shape,
        evaluated at ``a0 = self.value``.
        """
        h = Jet4(self.c.copy())
        h.c[0, 0] = 0.0
        out = Jet4.constant(coeffs[0], self.c.shape[2:])
        hk = Jet4.constant(1.0, self.c.shape[2:])
        for k in range(1, ORDER + 1):
            hk = hk * h
            out = out + hk * coeffs[k]
        return out

    def reciprocal(self) -> "Jet4":
        a = self.value
        if np.any(a == 0):
            raise ZeroDivisionError("reciprocal of a jet with zero value")
        return self.compose([(-1.0) ** k / a ** (k + 1) for k in range(ORDER + 1)])

    def power(self, p: float) -> "Jet4":
        """self**p for real p; requires a positive value."""
        a = self.value
        if np.any(a <= 0):
            raise ValueError("real power of a jet needs a positive value")
        coeffs = []
        binom = 1.0
        for k in range(ORDER + 1):
            coeffs.append(binom * a ** (p - k))
            binom *= (p - k) / (k + 1)
        return self.compose(coeffs)

    def sqrt(self) -> "Jet4":
        return self.power(0.5)

    def sin(self) -> "Jet4":
        s, c = np.sin(self.value), np.cos(self.value)
        return self.compose([s, c, -s / 2, -c / 6, s / 24])

    def cos(self) -> "Jet4":
        s, c = np.sin(self.value), np.cos(self.value)
        return self.compose([c, -s, -c / 2, s / 6, c / 24])

    def exp(self) -> "Jet4":
        e = np.exp(self.value)
        return self.compose([e / factorial(k) for k in range(ORDER + 1)])

    def atan(self) -> "Jet4":
        a = self.value
        q = 1.0 + a * a
        return self.compose(
            [
                np.arctan(a),
                1.0 / q,
                -a / q**2,
                (3 * a * a - 1) / (3 * q**3),
                (a - a**3) / q**4,
            ]
        )


def polar_angle(x: Jet4, y: Jet4) -> Jet4:
    """Jet of the polar angle measured counterclockwise in [0, 2 pi).

    The variation around the expansion point is ``atan(w)`` with
    ``w = (x0 y - y0 x) / (x0 x + y0 y)``, which vanishes there, so no
    branch cut enters the derivatives. The origin is rejected.
    """
    x0, y0 = x.value, y.value
    if np.any(x0 * x0 + y0 * y0 == 0):
        raise ValueError("polar angle is undefined at the origin")
    theta0 = np.arctan2(y0, x0)
    theta0 = np.where(theta0 < 0, theta0 + 2 * np.pi, theta0)
    w = (y * x0 - x * y0) / (x * x0 + y * y0)
    return w.atan() + theta0
