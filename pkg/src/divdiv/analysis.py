"""Error norms, L2 projection onto P1, the mesh-dependent H2 seminorm and
the local P5 postprocessing.

All discrete fields are :class:`PiecewisePolynomial` objects in the
scaled local coordinates of the mesh (centroid, diameter), the same
frame used by the stress bases.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .assembly import CORNER_DEGREE, LOAD_DEGREE, SparseSystem, element_degrees, quadrature_groups
from .mesh import Mesh
from .polys import PiecewisePolynomial, exponents, pack
from .problems import Manufactured
from .quadrature import edge_rule, triangle_rule
from .ref_basis import FROB, divdiv

# inverse of the reference P1 mass pattern (1 + delta_ij) / 12, times |K|
_P1_MASS_INV = 3.0 * np.array([[3.0, -1.0, -1.0], [-1.0, 3.0, -1.0], [-1.0, -1.0, 3.0]])


class PostprocessError(RuntimeError):
    pass


@dataclass
class ErrorBundle:
    level: int
    h: float
    e_sigma: float
    e_divdiv: float
    e_u: float
    e_Qu: float
    snorm_Qu: float
    snorm_post: float

    NAMES = ("e_sigma", "e_divdiv", "e_u", "e_Qu", "snorm_Qu", "snorm_post")

    def values(self) -> list[float]:
        return [getattr(self, n) for n in self.NAMES]

    def as_dict(self) -> dict:
        return asdict(self)


def _frame(mesh: Mesh):
    return mesh.centroids, mesh.diameters


def _bary(ref: np.ndarray) -> np.ndarray:
    return np.column_stack([1.0 - ref[:, 0] - ref[:, 1], ref[:, 0], ref[:, 1]])


# ----------------------------------------------------------------- fields
def p1_field(mesh: Mesh, coeffs: np.ndarray) -> PiecewisePolynomial:
    """Piecewise P1 field from barycentric coefficients (T, 3)."""
    c, s = _frame(mesh)
    loc = (mesh.corners - c[:, None, :]) / s[:, None, None]
    V = np.stack([np.ones(loc.shape[:2]), loc[..., 0], loc[..., 1]], axis=-1)  # (T, 3 vertices, 3)
    g = np.linalg.solve(V, np.asarray(coeffs, dtype=float)[..., None])[..., 0]  # [1, xi, eta]
    out = np.zeros((mesh.n_triangles, 2, 2))
    out[:, 0, 0], out[:, 1, 0], out[:, 0, 1] = g[:, 0], g[:, 1], g[:, 2]
    return PiecewisePolynomial(out, c, s)


def stress_field(system: SparseSystem, sigma: np.ndarray) -> PiecewisePolynomial:
    """sigma_h with components (11, 12, 22) from global coefficients."""
    local = system.sigma_map.gather(np.asarray(sigma, dtype=float))  # (T, 30)
    coeffs = np.einsum("tf,tfcij->tcij", local, system.basis.coeffs)
    return PiecewisePolynomial(coeffs, system.basis.centers, system.basis.scales)


def displacement_coeffs(system: SparseSystem, u: np.ndarray) -> np.ndarray:
    return system.u_map.gather(np.asarray(u, dtype=float))


# ------------------------------------------------------------- projection
def project_Qh(
    mesh: Mesh,
    func,
    qdeg: int = LOAD_DEGREE,
    corner_qdeg: int = CORNER_DEGREE,
    problem: Manufactured | None = None,
) -> np.ndarray:
    """Elementwise L2 projection onto P1; returns barycentric coefficients (T, 3).

    ``func`` maps points (..., 2) to values. Passing ``problem`` raises
    the quadrature degree on triangles touching its singular point.
    """
    if isinstance(func, Manufactured):
        problem = problem or func
        func = func.u
    degrees = np.full(mesh.n_triangles, qdeg) if problem is None else element_degrees(mesh, problem, qdeg, corner_qdeg)
    out = np.zeros((mesh.n_triangles, 3))
    for elems, pts, w, ref in quadrature_groups(mesh, degrees):
        rhs = np.einsum("tq,qr,tq->tr", func(pts), _bary(ref), w)
        out[elems] = rhs @ _P1_MASS_INV.T / mesh.areas[elems, None]
    return out


# ------------------------------------------------------------ error norms
def _l2_error(mesh, degrees, exact, field: PiecewisePolynomial, weights=None) -> float:
    total = 0.0
    for elems, pts, w, _ in quadrature_groups(mesh, degrees):
        approx = field.evaluate(pts, elems)
        if field.components:
            approx = np.moveaxis(approx, 1, -1)
        diff = exact(pts) - approx
        sq = diff**2 if weights is None else np.einsum("tqc,c->tq", diff**2, weights)
        total += float(np.sum(sq * w))
    return float(np.sqrt(total))


def p1_l2_norm(mesh: Mesh, coeffs: np.ndarray) -> float:
    """Exact L2 norm of a piecewise P1 field given by barycentric coefficients."""
    block = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return float(np.sqrt(np.sum(mesh.areas * np.einsum("ti,ij,tj->t", coeffs, block, coeffs))))


# ---------------------------------------------------- mesh-dependent norm
class ExactMinusPoly:
    """Broken field ``u - p`` with ``u`` a manufactured solution."""

    def __init__(self, problem: Manufactured, poly: PiecewisePolynomial):
        self.problem = problem
        self.poly = poly

    def local(self, elems, points):
        v, g, h = _poly_local(self.poly, elems, points)
        d = self.problem.all_derivatives(points)
        ev = d[(0, 0)]
        eg = np.stack([d[(1, 0)], d[(0, 1)]], axis=1)
        eh = np.stack([d[(2, 0)], d[(1, 1)], d[(0, 2)]], axis=1)
        return ev - v, eg - g, eh - h


def _poly_local(poly: PiecewisePolynomial, elems, points):
    elems = np.asarray(elems)
    v = poly.evaluate(points, elems)
    g = poly.gradient().evaluate(points, elems)
    h = poly.hessian().evaluate(points, elems) if poly.degree >= 2 else np.zeros((len(elems), 3, points.shape[1]))
    return v, g, h


def _local(field, elems, points):
    if isinstance(field, PiecewisePolynomial):
        return _poly_local(field, elems, points)
    return field.local(elems, points)


def seminorm_2h(
    mesh: Mesh,
    field,
    qdeg: int = LOAD_DEGREE,
    edge_qdeg: int = 20,
    degrees: np.ndarray | None = None,
) -> float:
    """Broken H2 seminorm plus ``h_e^-3 ||[v]||^2 + h_e^-1 ||[grad v]||^2`` per edge.

    ``field`` is a scalar :class:`PiecewisePolynomial` or an object with a
    ``local(elems, points) -> (value, gradient, hessian)`` method. On
    boundary edges the jump is the trace.
    """
    if degrees is None:
        degrees = np.full(mesh.n_triangles, qdeg)
    total = 0.0
    for elems, pts, w, _ in quadrature_groups(mesh, degrees):
        _, _, h = _local(field, elems, pts)
        hs = h[:, 0] ** 2 + 2.0 * h[:, 1] ** 2 + h[:, 2] ** 2
        total += float(np.sum(hs * w))

    rule = edge_rule(edge_qdeg)
    s, ws = rule.points, rule.weights
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    h_e = mesh.edge_lengths
    k0, k1 = mesh.edge_tris[:, 0], mesh.edge_tris[:, 1]
    v0, g0, _ = _local(field, k0, pts)
    jump_v, jump_g = v0, g0
    inner = k1 >= 0
    if np.any(inner):
        v1, g1, _ = _local(field, k1[inner], pts[inner])
        jump_v = jump_v.copy()
        jump_g = jump_g.copy()
        jump_v[inner] -= v1
        jump_g[inner] -= g1
    jv = (jump_v**2) @ ws * h_e
    jg = np.sum(jump_g**2, axis=1) @ ws * h_e
    total += float(np.sum(jv / h_e**3 + jg / h_e))
    return float(np.sqrt(total))


# -------------------------------------------------------------- postprocess
_P5 = exponents(5)
_HIGH = [k for k, (i, j) in enumerate(_P5) if i + j >= 2]


def _monomial_data(xi, eta, s):
    """Values (T, 21, q) and physical Hessians (T, 21, 3, q) of the P5 monomials."""
    def pw(z, p):
        return z**p if p >= 0 else np.zeros_like(z)

    vals, hess = [], []
    for i, j in _P5:
        vals.append(pw(xi, i) * pw(eta, j))
        hxx = i * (i - 1) * pw(xi, i - 2) * pw(eta, j)
        hxy = i * j * pw(xi, i - 1) * pw(eta, j - 1)
        hyy = j * (j - 1) * pw(xi, i) * pw(eta, j - 2)
        hess.append(np.stack([hxx, hxy, hyy], axis=1))
    inv = 1.0 / (s**2)[:, None, None, None]
    return np.stack(vals, axis=1), np.stack(hess, axis=1) * inv


def postprocess(
    mesh: Mesh,
    sigma: PiecewisePolynomial,
    u_coeffs: np.ndarray,
    qdeg: int = 10,
) -> PiecewisePolynomial:
    """Local P5 reconstruction from (sigma_h, u_h).

    On each triangle ``(hess u*, hess q) = -(sigma_h, hess q)`` for the 18
    monomials q of degree 2..5 and ``(u*, lambda_r) = (u_h, lambda_r)`` for
    the three barycentric functions; the resulting 21 x 21 system is
    solved after row equilibration.
    """
    rule = triangle_rule(qdeg)
    c, s = _frame(mesh)
    B = np.stack([mesh.corners[:, 1] - mesh.corners[:, 0], mesh.corners[:, 2] - mesh.corners[:, 0]], axis=2)
    pts = mesh.corners[:, None, 0, :] + np.einsum("tij,qj->tqi", B, rule.points)
    xi = (pts[..., 0] - c[:, None, 0]) / s[:, None]
    eta = (pts[..., 1] - c[:, None, 1]) / s[:, None]
    w = rule.weights[None, :] * (2.0 * mesh.areas)[:, None]
    vals, hess = _monomial_data(xi, eta, s)
    lam = _bary(rule.points)

    hess_hi = hess[:, _HIGH]
    A_h = np.einsum("tacq,tbcq,c,tq->tab", hess_hi, hess, FROB, w)
    sig = sigma.evaluate(pts)  # (T, 3, q)
    r_h = -np.einsum("tcq,tacq,c,tq->ta", sig, hess_hi, FROB, w)
    A_m = np.einsum("qr,tbq,tq->trb", lam, vals, w)
    uh = np.einsum("tr,qr->tq", u_coeffs, lam)
    r_m = np.einsum("qr,tq,tq->tr", lam, uh, w)

    A = np.concatenate([A_h, A_m], axis=1)
    r = np.concatenate([r_h, r_m], axis=1)
    scale = np.max(np.abs(A), axis=2, keepdims=True)
    if np.any(scale == 0):
        raise PostprocessError("empty row in the local postprocessing system")
    try:
        sol = np.linalg.solve(A / scale, (r / scale[..., 0])[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise PostprocessError(f"singular local postprocessing system: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise PostprocessError("non-finite postprocessed coefficients")
    return PiecewisePolynomial(pack(sol, 5), c, s)


# ------------------------------------------------------------------ driver
def error_norms(
    system: SparseSystem,
    solution,
    problem: Manufactured,
    qdeg: int = LOAD_DEGREE,
    corner_qdeg: int = CORNER_DEGREE,
    level: int | None = None,
) -> ErrorBundle:
    """The six error quantities for a solved system."""
    mesh = system.mesh
    degrees = element_degrees(mesh, problem, qdeg, corner_qdeg)
    sig_h = stress_field(system, solution.sigma)
    uc = displacement_coeffs(system, solution.u)
    u_h = p1_field(mesh, uc)

    e_sigma = _l2_error(mesh, degrees, problem.sigma, sig_h, FROB)
    dd = PiecewisePolynomial(divdiv(sig_h.coeffs[:, None], sig_h.scales)[:, 0], sig_h.centers, sig_h.scales)
    e_divdiv = _l2_error(mesh, degrees, lambda p: -problem.f(p), dd)
    e_u = _l2_error(mesh, degrees, problem.u, u_h)

    qu = project_Qh(mesh, problem.u, qdeg, corner_qdeg, problem)
    e_Qu = p1_l2_norm(mesh, qu - uc)
    snorm_Qu = seminorm_2h(mesh, p1_field(mesh, qu - uc), degrees=degrees)

    u_star = postprocess(mesh, sig_h, uc)
    snorm_post = seminorm_2h(mesh, ExactMinusPoly(problem, u_star), degrees=degrees)
    return ErrorBundle(
        level if level is not None else mesh.level, mesh.h, e_sigma, e_divdiv, e_u, e_Qu, snorm_Qu, snorm_post
    )


def rates(values) -> list[float | None]:
    """``log2(e_l / e_{l+1})``; the first entry is None."""
    out: list[float | None] = [None]
    for a, b in zip(values[:-1], values[1:]):
        out.append(float(np.log2(a / b)) if a > 0 and b > 0 else None)
    return out
