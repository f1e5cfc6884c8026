"""Local basis of the cubic H(div div)-conforming symmetric tensor element.

Reference data live on the triangle with vertices (0,0), (1,0), (0,1) and
barycentric coordinates ``l1 = 1 - x - y``, ``l2 = x``, ``l3 = y``. Local
edge ``i`` (0-based) is opposite vertex ``i``.

The 30 local functionals of a triangle, in local order, are

* ``3 v + c``: value of component ``c`` (11, 12, 22) at local vertex ``v``;
* ``9 + 7 l + j`` for local edge ``l`` with endpoints ordered by global
  vertex id (``mu_a``, ``mu_b`` the edge barycentrics):

  - ``j = 0..3``: ``int_e (tau n_out) . e_c mu`` for
    ``(mu, c) = (mu_a, x), (mu_a, y), (mu_b, x), (mu_b, y)``;
  - ``j = 4..6``: ``int_e n_out . div tau  w`` for
    ``w = mu_a, mu_b, mu_a mu_b``.

Edge functionals use the outward normal, so a global basis function
restricted to a triangle is the local one times the edge sign stored in
the mesh.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction as Fr
from functools import lru_cache

import numpy as np
from scipy.signal import convolve2d

from .polys import PiecewisePolynomial, exponents, pack, polyder, polyval
from .quadrature import edge_rule

N_LOCAL = 30
DEG = 3
# Frobenius weights of the stored components (11, 12, 22).
FROB = np.array([1.0, 2.0, 1.0])


class ConstructionError(RuntimeError):
    """Raised when a basis self-check fails."""


class DegenerateElementError(ValueError):
    """Raised for triangles with (numerically) zero area."""


# ------------------------------------------------------------------ reference
class _RefPoly:
    """Scalar polynomial on the reference triangle (coefficients c[i, j] of x^i y^j)."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    @staticmethod
    def _fit(c):
        out = np.zeros((DEG + 1, DEG + 1))
        n = min(c.shape[0], DEG + 1)
        if np.any(c[DEG + 1 :, :]) or np.any(c[:, DEG + 1 :]):
            raise ValueError("reference polynomial exceeds degree 3")
        out[:n, :n] = c[:n, :n]
        return out

    def __add__(self, o):
        o = o if isinstance(o, _RefPoly) else _RefPoly(np.array([[float(o)]]))
        d = max(self.c.shape[0], o.c.shape[0])
        a = np.zeros((d, d))
        b = np.zeros((d, d))
        a[: self.c.shape[0], : self.c.shape[1]] = self.c
        b[: o.c.shape[0], : o.c.shape[1]] = o.c
        return _RefPoly(a + b)

    __radd__ = __add__

    def __neg__(self):
        return _RefPoly(-self.c)

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if isinstance(o, _RefPoly):
            return _RefPoly(convolve2d(self.c, o.c))
        return _RefPoly(self.c * float(o))

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = _RefPoly(np.array([[1.0]]))
        for _ in range(n):
            out = out * self
        return out

    def array(self):
        return self._fit(self.c)


L1 = _RefPoly([[1.0, -1.0], [-1.0, 0.0]])
L2 = _RefPoly([[0.0, 0.0], [1.0, 0.0]])
L3 = _RefPoly([[0.0, 1.0], [0.0, 0.0]])
_LAM = (L1, L2, L3)

# Reference tangents t_i = x_{i-1} - x_{i+1} and the basis tensors T_1..T_3.
REF_TANGENTS = np.array([[-1.0, 1.0], [0.0, -1.0], [1.0, 0.0]])
_T = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])  # (11, 12, 22) per T_j


def _sym(p: _RefPoly, comps) -> np.ndarray:
    """Symmetric tensor polynomial p * M with M given by its (11, 12, 22) entries."""
    a = p.array()
    return np.stack([a * comps[0], a * comps[1], a * comps[2]])


def _tt(t) -> tuple[float, float, float]:
    return (t[0] * t[0], t[0] * t[1], t[1] * t[1])


def _mat(m11, m12, m22) -> np.ndarray:
    return np.stack([m.array() if isinstance(m, _RefPoly) else m for m in (m11, m12, m22)])


def hz_bubbles() -> np.ndarray:
    """The nine normal-trace-free cubic bubbles on the reference triangle.

    Edge bubbles ``(9/2) l_{i+1} l_{i-1} (3 l_* - 1) t_i t_i^T`` use the
    unnormalized reference tangents; the last three are ``27 l1 l2 l3 t_i t_i^T``.
    Returns shape (9, 3, 4, 4).
    """
    out = []
    for i in range(3):
        a, b = _LAM[(i + 1) % 3], _LAM[(i + 2) % 3]
        tt = _tt(REF_TANGENTS[i])
        out.append(_sym(4.5 * a * b * (3 * a - 1), tt))
        out.append(_sym(4.5 * b * a * (3 * b - 1), tt))
    cube = 27 * L1 * L2 * L3
    out += [_sym(cube, _tt(t)) for t in REF_TANGENTS]
    return np.array(out)


def matrix_bubbles() -> np.ndarray:
    """Bubble set on which the tabulated matrix C acts.

    Same span as :func:`hz_bubbles`; the first two use the unit tangent on
    edge 1 and the interior bubbles use the tensors T_1, T_2, T_3.
    """
    b = hz_bubbles()
    b[0:2] *= 0.5
    cube = 27 * L1 * L2 * L3
    for k in range(3):
        b[6 + k] = _sym(cube, _T[k])
    return b


def _c_matrix() -> np.ndarray:
    F = Fr
    rows = [
        [0, 0, F(4, 9), F(2, 9), F(2, 3), F(4, 3), F(1, 3), F(-1, 3), F(1, 9)],
        [0, 0, F(4, 3), F(2, 3), F(2, 9), F(4, 9), F(1, 9), F(-1, 3), F(1, 3)],
        [0, 0, F(-40, 9), F(-20, 9), F(-20, 9), F(-40, 9), F(-10, 9), F(20, 9), F(-10, 9)],
        [F(-4, 3), F(-8, 3), 0, 0, F(-4, 9), F(-2, 9), F(2, 9), 0, F(-1, 3)],
        [F(-4, 9), F(-8, 9), 0, 0, F(-4, 3), F(-2, 3), F(2, 9), F(-2, 9), F(-1, 9)],
        [F(40, 9), F(80, 9), 0, 0, F(40, 9), F(20, 9), F(-20, 9), F(10, 9), F(10, 9)],
        [F(-8, 9), F(-4, 9), F(-2, 3), F(-4, 3), 0, 0, F(-1, 9), F(-2, 9), F(2, 9)],
        [F(-8, 3), F(-4, 3), F(-2, 9), F(-4, 9), 0, 0, F(-1, 3), 0, F(2, 9)],
        [F(80, 9), F(40, 9), F(20, 9), F(40, 9), 0, 0, F(10, 9), F(10, 9), F(-20, 9)],
    ]
    m = np.array([[float(v) for v in r] for r in rows])
    m.setflags(write=False)
    return m


C_MATRIX = _c_matrix()


def closed_form_duals() -> np.ndarray:
    """Closed forms of the nine reference edge duals, shape (9, 3, 4, 4)."""
    a, b, c = L1, L2, L3
    return np.array(
        [
            _mat(9 * a * b**2, -9 * a * b * c, 3 * a * c**2),
            _mat(3 * a * b**2, -9 * a * b * c, 9 * a * c**2),
            _mat(-30 * a * b**2, 60 * a * b * c, -30 * a * c**2),
            _mat(
                -3 * b * (b**2 + 8 * b * c - b + 10 * c**2 - 7 * c + a),
                9 * b * c * (c - a),
                -9 * b * c**2,
            ),
            _mat(
                -3 * b * (3 * b**2 + 12 * b * c - 3 * b + 10 * c**2 - 9 * c + 3 * a),
                3 * b * c * (c - 3 * a),
                -3 * b * c**2,
            ),
            _mat(
                30 * b * (b**2 + 6 * b * c - b + 6 * c**2 - 5 * c + a),
                30 * b * c * (2 * a - c),
                30 * b * c**2,
            ),
            _mat(
                -3 * b**2 * c,
                3 * b * c * (b - 3 * a),
                -3 * c * (10 * b**2 + 12 * b * c - 9 * b + 3 * c**2 - 3 * c + 3 * a),
            ),
            _mat(
                -9 * b**2 * c,
                9 * b * c * (b - a),
                -3 * c * (10 * b**2 + 8 * b * c - 7 * b + c**2 - c + a),
            ),
            _mat(
                30 * b**2 * c,
                30 * b * c * (2 * a - b),
                30 * c * (6 * b**2 + 6 * b * c - 5 * b + c**2 - c + a),
            ),
        ]
    )


@lru_cache(maxsize=1)
def _reference_duals_cached() -> np.ndarray:
    combo = np.einsum("ij,jckl->ickl", C_MATRIX, matrix_bubbles())
    closed = closed_form_duals()
    dev = np.max(np.abs(combo - closed))
    if dev > 1e-12:
        raise ConstructionError(f"C-matrix combination deviates from closed forms by {dev:.3e}")
    combo.setflags(write=False)
    return combo


def reference_edge_duals() -> np.ndarray:
    """Reference duals ``sum_j C[i, j] theta_j``, checked against the closed forms."""
    return _reference_duals_cached()


# Outward normals of the reference edges; the tabulated duals orient edge 1
# inward, which REF_DUAL_SIGNS undoes for the physical construction.
REF_NORMALS = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]) / np.array(
    [[np.sqrt(2.0)], [1.0], [1.0]]
)
REF_DUAL_SIGNS = np.array([-1.0, -1.0, -1.0, 1, 1, 1, 1, 1, 1])
_REF_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _div_ref(tau: np.ndarray) -> np.ndarray:
    """Row divergence of reference tensors (..., 3, n, n) -> (..., 2, n, n)."""
    t11, t12, t22 = tau[..., 0, :, :], tau[..., 1, :, :], tau[..., 2, :, :]
    return np.stack([polyder(t11, 1, 0) + polyder(t12, 0, 1), polyder(t12, 1, 0) + polyder(t22, 0, 1)], axis=-3)


def reference_d(tau: np.ndarray, orientation: str = "tabulated") -> np.ndarray:
    """Apply the nine reference edge functionals to tensors of shape (F, 3, n, n).

    ``d_{3i+k}`` integrates ``n_i . div tau`` against ``l_{i+1}``,
    ``l_{i-1}`` and their product along edge ``i``. With
    ``orientation="tabulated"`` edge 1 uses the inward normal, the
    convention under which the tabulated duals satisfy d(tau) = I;
    ``"outward"`` uses outward normals throughout. Returns (9, F).
    """
    normals = REF_NORMALS.copy()
    if orientation == "tabulated":
        normals[0] *= -1.0
    elif orientation != "outward":
        raise ValueError(f"unknown orientation {orientation!r}")
    rule = edge_rule(8)
    s, w = rule.points, rule.weights
    div = _div_ref(np.asarray(tau, dtype=float))
    out = np.zeros((9, len(tau)))
    for i in range(3):
        p, q = _REF_CORNERS[(i + 1) % 3], _REF_CORNERS[(i + 2) % 3]
        pts = p + s[:, None] * (q - p)
        length = np.linalg.norm(q - p)
        dv = polyval(div, pts[:, 0], pts[:, 1])  # (F, 2, q)
        flux = np.einsum("fkq,k->fq", dv, normals[i])
        weights = (1.0 - s, s, s * (1.0 - s))
        for k, wk in enumerate(weights):
            out[3 * i + k] = flux @ (w * wk) * length
    return out


# ------------------------------------------------------------------ geometry
@dataclass(frozen=True)
class ElementGeometry:
    """Per-triangle data needed by the local constructions.

    ``corners`` (T, 3, 2) counterclockwise, ``vertex_ids`` (T, 3) global
    ids used only to order edge endpoints.
    """

    corners: np.ndarray
    vertex_ids: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=float)
        B = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)
        det = np.linalg.det(B)
        scale = np.max(np.linalg.norm(c - np.roll(c, 1, axis=1), axis=2), axis=1)
        bad = det <= 1e-12 * scale**2
        if np.any(bad):
            raise DegenerateElementError(
                f"triangle {int(np.argmax(bad))} is degenerate or clockwise (J = {det[bad][0]:.3e})"
            )
        object.__setattr__(self, "corners", c)
        object.__setattr__(self, "vertex_ids", np.asarray(self.vertex_ids, dtype=np.int64))
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "J", det)
        object.__setattr__(self, "centers", c.mean(axis=1))
        object.__setattr__(self, "scales", scale)

    @classmethod
    def from_mesh(cls, mesh, elems=None) -> "ElementGeometry":
        sl = slice(None) if elems is None else elems
        return cls(mesh.corners[sl], mesh.triangles[sl])

    @classmethod
    def from_corners(cls, corners, vertex_ids=None) -> "ElementGeometry":
        corners = np.asarray(corners, dtype=float).reshape(-1, 3, 2)
        if vertex_ids is None:
            vertex_ids = np.tile(np.arange(3), (len(corners), 1))
        return cls(corners, np.asarray(vertex_ids).reshape(-1, 3))

    def __len__(self) -> int:
        return len(self.corners)

    def to_local(self, points: np.ndarray):
        """Scaled local coordinates of physical points (T, q, 2)."""
        xi = (points[..., 0] - self.centers[:, None, 0]) / self.scales[:, None]
        eta = (points[..., 1] - self.centers[:, None, 1]) / self.scales[:, None]
        return xi, eta

    def map_points(self, ref_points: np.ndarray) -> np.ndarray:
        """Images of reference points (q, 2) on every triangle, shape (T, q, 2)."""
        return self.corners[:, None, 0, :] + np.einsum("tij,qj->tqi", self.B, ref_points)

    def edge_points(self, l: int, s: np.ndarray):
        """Points, outward normal and length of local edge ``l`` at parameters ``s``."""
        p = self.corners[:, (l + 1) % 3]
        q = self.corners[:, (l + 2) % 3]
        d = q - p
        length = np.linalg.norm(d, axis=1)
        normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
        pts = p[:, None, :] + s[None, :, None] * d[:, None, :]
        return pts, normal, length

    def edge_forward(self, l: int) -> np.ndarray:
        """True where local vertex l+1 carries the smaller global id (mu_a = 1 - s)."""
        return self.vertex_ids[:, (l + 1) % 3] < self.vertex_ids[:, (l + 2) % 3]


# -------------------------------------------------------------- evaluation
def _powers(xi, eta, d):
    return xi[..., None] ** np.arange(d + 1), eta[..., None] ** np.arange(d + 1)


def evaluate_local(coeffs: np.ndarray, geom: ElementGeometry, points: np.ndarray) -> np.ndarray:
    """Evaluate per-element coefficient arrays (T, F, C, n, n) at points (T, q, 2)."""
    xi, eta = geom.to_local(points)
    xp, yp = _powers(xi, eta, coeffs.shape[-1] - 1)
    return np.einsum("tfcij,tqi,tqj->tfcq", coeffs, xp, yp)


def divergence(coeffs: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Physical row divergence of tensors stored in scaled local coordinates."""
    inv = (1.0 / scales).reshape((-1,) + (1,) * (coeffs.ndim - 1))
    return _div_ref(coeffs) * inv


def divdiv(coeffs: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Physical div div of tensors (T, F, 3, n, n) -> scalars (T, F, n, n)."""
    t11, t12, t22 = coeffs[..., 0, :, :], coeffs[..., 1, :, :], coeffs[..., 2, :, :]
    dd = polyder(t11, 2, 0) + 2.0 * polyder(t12, 1, 1) + polyder(t22, 0, 2)
    return dd / (scales**2).reshape((-1,) + (1,) * (dd.ndim - 1))


def apply_functionals(coeffs: np.ndarray, geom: ElementGeometry, qdeg: int = 8) -> np.ndarray:
    """Apply the 30 local functionals to tensors (T, F, 3, n, n); returns (T, 30, F)."""
    T, F = coeffs.shape[:2]
    out = np.zeros((T, N_LOCAL, F))
    vals = evaluate_local(coeffs, geom, geom.corners)  # (T, F, 3, 3 vertices)
    for v in range(3):
        out[:, 3 * v : 3 * v + 3, :] = vals[..., v].transpose(0, 2, 1)

    rule = edge_rule(qdeg)
    s, w = rule.points, rule.weights
    div = divergence(coeffs, geom.scales)
    for l in range(3):
        pts, n, length = geom.edge_points(l, s)
        tv = evaluate_local(coeffs, geom, pts)  # (T, F, 3, q)
        dv = evaluate_local(div, geom, pts)  # (T, F, 2, q)
        tn_x = tv[:, :, 0] * n[:, None, 0, None] + tv[:, :, 1] * n[:, None, 1, None]
        tn_y = tv[:, :, 1] * n[:, None, 0, None] + tv[:, :, 2] * n[:, None, 1, None]
        flux = dv[:, :, 0] * n[:, None, 0, None] + dv[:, :, 1] * n[:, None, 1, None]
        fwd = geom.edge_forward(l)[:, None]
        mu_a = np.where(fwd, 1.0 - s, s)  # (T, q)
        mu_b = 1.0 - mu_a
        wl = w[None, :] * length[:, None]
        base = 9 + 7 * l
        for j, (g, mu) in enumerate(((tn_x, mu_a), (tn_y, mu_a), (tn_x, mu_b), (tn_y, mu_b))):
            out[:, base + j] = np.einsum("tfq,tq->tf", g, mu * wl)
        for j, mu in enumerate((mu_a, mu_b, mu_a * mu_b)):
            out[:, base + 4 + j] = np.einsum("tfq,tq->tf", flux, mu * wl)
    return out


# ----------------------------------------------------------- node fitting
_NODES_BARY = np.array(
    [(i, j, 3 - i - j) for i in range(4) for j in range(4 - i)], dtype=float
) / 3.0
# Reference coordinates (l2, l3) of the P3 Lagrange nodes.
_NODES_REF = _NODES_BARY[:, 1:]


def _fit_matrix(geom: ElementGeometry) -> np.ndarray:
    """Inverse Vandermonde on the P3 Lagrange nodes in scaled local coordinates."""
    xi, eta = geom.to_local(geom.map_points(_NODES_REF))
    V = np.stack([xi**i * eta**j for i, j in exponents(DEG)], axis=-1)
    return np.linalg.inv(V)


def _fit(values: np.ndarray, vinv: np.ndarray) -> np.ndarray:
    """Node values (T, F, C, 10) -> packed coefficients (T, F, C, 4, 4)."""
    graded = np.einsum("tmn,tfcn->tfcm", vinv, values)
    return pack(graded, DEG)


# ------------------------------------------------------------ constructions
def piola(tau_ref: np.ndarray, geom: ElementGeometry) -> np.ndarray:
    """Piola images ``(1/J) B tau B^T`` of reference tensors (F, 3, n, n).

    Returns coefficients (T, F, 3, 4, 4) in the scaled local coordinates.
    """
    vals = polyval(tau_ref, _NODES_REF[:, 0], _NODES_REF[:, 1])  # (F, 3, 10)
    full = np.empty(vals.shape[:1] + (2, 2) + vals.shape[2:])
    full[:, 0, 0], full[:, 0, 1], full[:, 1, 0], full[:, 1, 1] = vals[:, 0], vals[:, 1], vals[:, 1], vals[:, 2]
    phys = np.einsum("tik,fklq,tjl->tfijq", geom.B, full, geom.B) / geom.J[:, None, None, None, None]
    sym = np.stack([phys[:, :, 0, 0], phys[:, :, 0, 1], phys[:, :, 1, 1]], axis=2)
    return _fit(sym, _fit_matrix(geom))


def edge_dual_basis(geom: ElementGeometry) -> np.ndarray:
    """Piola images of the reference edge duals, oriented by outward normals.

    Function ``3 l + k`` is dual to ``int_e n_out . div tau w_k`` on local
    edge ``l`` with ``w = (l_{l+1}, l_{l+2}, l_{l+1} l_{l+2})``; its normal
    trace vanishes on the whole boundary. Shape (T, 9, 3, 4, 4).
    """
    ref = reference_edge_duals() * REF_DUAL_SIGNS[:, None, None, None]
    return piola(ref, geom)


def hz_outer_basis(geom: ElementGeometry) -> np.ndarray:
    """Nine vertex functions followed by twelve edge-flux functions.

    Vertex function ``3 v + c`` is ``phi_v T_c`` with the cubic Lagrange
    vertex function ``phi_v``. On local edge ``l`` the four functions are
    ``phi_{l,1} n n^T``, ``phi_{l,1} sym(t n^T)``, ``phi_{l,2} n n^T``,
    ``phi_{l,2} sym(t n^T)`` with ``phi_{l,k} = (9/2) l_{l+1} l_{l+2} (3 l_* - 1)``.
    Shape (T, 21, 3, 4, 4).
    """
    lam = _NODES_BARY  # columns (l1, l2, l3) at each node
    T = len(geom)
    values = np.zeros((T, 21, 3, len(lam)))
    for v in range(3):
        phi = 0.5 * lam[:, v] * (3 * lam[:, v] - 1) * (3 * lam[:, v] - 2)
        for c in range(3):
            values[:, 3 * v + c, c] = phi
    for l in range(3):
        _, n, _ = geom.edge_points(l, np.zeros(1))
        t = np.column_stack([-n[:, 1], n[:, 0]])
        nn = np.column_stack([n[:, 0] ** 2, n[:, 0] * n[:, 1], n[:, 1] ** 2])
        tn = np.column_stack([t[:, 0] * n[:, 0], 0.5 * (t[:, 0] * n[:, 1] + t[:, 1] * n[:, 0]), t[:, 1] * n[:, 1]])
        a, b = lam[:, (l + 1) % 3], lam[:, (l + 2) % 3]
        for k, phi in enumerate((4.5 * a * b * (3 * a - 1), 4.5 * a * b * (3 * b - 1))):
            for m, ten in enumerate((nn, tn)):
                values[:, 9 + 4 * l + 2 * k + m] = ten[:, :, None] * phi[None, None, :]
    return _fit(values, _fit_matrix(geom))


def _local_d(coeffs: np.ndarray, geom: ElementGeometry) -> np.ndarray:
    """Outward div-moment functionals in local-vertex weight order, (T, 9, F)."""
    cat = apply_functionals(coeffs, geom)
    out = np.empty((len(geom), 9, coeffs.shape[1]))
    for l in range(3):
        d = cat[:, 9 + 7 * l + 4 : 9 + 7 * l + 7]
        fwd = geom.edge_forward(l)[:, None]
        out[:, 3 * l] = np.where(fwd, d[:, 0], d[:, 1])
        out[:, 3 * l + 1] = np.where(fwd, d[:, 1], d[:, 0])
        out[:, 3 * l + 2] = d[:, 2]
    return out


@dataclass(frozen=True)
class LocalBasis:
    """Thirty symmetric-tensor cubics per triangle, dual to the local functionals.

    ``coeffs`` has shape (T, 30, 3, 4, 4) in the scaled local coordinates
    given by ``centers`` and ``scales``.
    """

    coeffs: np.ndarray
    centers: np.ndarray
    scales: np.ndarray

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    def field(self) -> PiecewisePolynomial:
        return PiecewisePolynomial(self.coeffs, self.centers, self.scales)

    def divdiv(self) -> np.ndarray:
        return divdiv(self.coeffs, self.scales)


DESCRIPTORS: tuple[tuple[str, int, int], ...] = tuple(
    [("vertex", v, c) for v in range(3) for c in range(3)]
    + [
        (kind, l, j)
        for l in range(3)
        for kind, j in [("flux", j) for j in range(4)] + [("divflux", j) for j in range(3)]
    ]
)


def correct_basis(geom: ElementGeometry, check: bool = True) -> LocalBasis:
    """Full local basis: edge duals plus corrected and re-dualized outer functions.

    The outer functions first lose their div-flux moments against the
    edge duals; vertex and edge functions are then recombined so that
    they are dual to the vertex values and the normal-trace moments.
    """
    T = len(geom)
    tau = edge_dual_basis(geom)
    phi = hz_outer_basis(geom)
    beta = _local_d(phi, geom)  # (T, 9, 21)
    phi = phi - np.einsum("tjf,tjckl->tfckl", beta, tau)

    cat = apply_functionals(phi, geom)
    out = np.zeros((T, N_LOCAL, 3, DEG + 1, DEG + 1))
    vert = phi[:, :9].copy()
    for l in range(3):
        rows = slice(9 + 7 * l, 9 + 7 * l + 4)
        edge_funcs = phi[:, 9 + 4 * l : 9 + 4 * l + 4]
        Y = cat[:, rows, 9 + 4 * l : 9 + 4 * l + 4]
        duals = np.einsum("tgckl,tgf->tfckl", edge_funcs, np.linalg.inv(Y))
        out[:, 9 + 7 * l : 9 + 7 * l + 4] = duals
        X = cat[:, rows, :9]
        vert -= np.einsum("tjckl,tjf->tfckl", duals, X)
        # div duals: local weight order (l_{l+1}, l_{l+2}) -> (mu_a, mu_b)
        fwd = geom.edge_forward(l)[:, None, None, None]
        e0, e1 = tau[:, 3 * l], tau[:, 3 * l + 1]
        out[:, 9 + 7 * l + 4] = np.where(fwd, e0, e1)
        out[:, 9 + 7 * l + 5] = np.where(fwd, e1, e0)
        out[:, 9 + 7 * l + 6] = tau[:, 3 * l + 2]
    out[:, :9] = vert

    if check:
        gram = scaled_gram(out, geom)
        dev = np.abs(gram - np.eye(N_LOCAL))
        worst = np.unravel_index(np.argmax(dev), dev.shape)
        if dev[worst] > 1e-10:
            raise ConstructionError(
                f"Gram deviation {dev[worst]:.3e} on element {worst[0]} at entry {worst[1:]}"
            )
    return LocalBasis(out, geom.centers, geom.scales)


# Length dimension of each local functional applied to an O(1) field.
FUNCTIONAL_ORDERS = np.array([0] * 9 + [1, 1, 1, 1, 0, 0, 0] * 3)


def scaled_gram(coeffs: np.ndarray, geom: ElementGeometry) -> np.ndarray:
    """Functional matrix (T, 30, 30) made scale free.

    Entry (i, j) is multiplied by ``h^(d_j - d_i)`` with ``d`` from
    :data:`FUNCTIONAL_ORDERS`, so a dual basis gives the identity
    independently of the element size.
    """
    g = apply_functionals(coeffs, geom)
    h = geom.scales[:, None, None]
    d = FUNCTIONAL_ORDERS
    return g * h ** (d[None, None, :] - d[None, :, None])


def monomial_tensors() -> np.ndarray:
    """The 30 tensors m * E_c (m a cubic monomial, c in 11, 12, 22), shape (30, 3, 4, 4)."""
    out = np.zeros((N_LOCAL, 3, DEG + 1, DEG + 1))
    k = 0
    for c in range(3):
        for i, j in exponents(DEG):
            out[k, c, i, j] = 1.0
            k += 1
    return out


def vandermonde_oracle(geom: ElementGeometry, cond_limit: float = 1e12) -> LocalBasis:
    """Dual basis by inverting the functional matrix on local monomial tensors."""
    mono = np.broadcast_to(monomial_tensors(), (len(geom),) + monomial_tensors().shape)
    A = apply_functionals(np.ascontiguousarray(mono), geom)  # (T, 30 functionals, 30 monomials)
    cond = np.linalg.cond(A)
    if np.any(~np.isfinite(cond)) or np.any(cond > cond_limit):
        bad = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
        raise DegenerateElementError(f"functional matrix singular on element {bad} (cond {cond[bad]:.3e})")
    coef = np.linalg.inv(A)  # column k: monomial weights of dual function k
    out = np.einsum("tmf,mcij->tfcij", coef, monomial_tensors())
    return LocalBasis(out, geom.centers, geom.scales)


def element_mass(basis: LocalBasis, geom: ElementGeometry, qdeg: int = 8) -> np.ndarray:
    """Local Frobenius mass matrices (T, 30, 30) in the local functional basis."""
    from .quadrature import triangle_rule

    if qdeg < 6:
        raise ValueError("mass matrices need quadrature degree >= 6")
    rule = triangle_rule(qdeg)
    pts = geom.map_points(rule.points)
    vals = evaluate_local(basis.coeffs, geom, pts)  # (T, 30, 3, q)
    w = rule.weights[None, :] * geom.J[:, None]
    return np.einsum("tfcq,tgcq,c,tq->tfg", vals, vals, FROB, w)
