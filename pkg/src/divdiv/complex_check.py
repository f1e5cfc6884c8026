"""Quartic vector element V_h and numerical checks of the discrete complex

    RT  --inclusion-->  V_h  --sym curl-->  Sigma_h  --div div-->  P_h  -->  0.

Local functionals of V_h on a triangle, in local order:

* ``6 v + k``: ``v1, v2, d_x v1, d_y v1, d_x v2, d_y v2`` at local vertex ``v``;
* ``18 + 4 l + j`` on local edge ``l``: ``int_e v1``, ``int_e v2``,
  ``int_e div v mu_a``, ``int_e div v mu_b``.

None of them involves a normal, so the global numbering carries no signs.
Here ``sym curl v = sym [[-d_y v1, d_x v1], [-d_y v2, d_x v2]]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .dofmap import DofMap, build_sigma_map
from .mesh import Mesh
from .polys import exponents, polyder
from .quadrature import edge_rule
from .ref_basis import DegenerateElementError, ElementGeometry, apply_functionals, divergence, evaluate_local

VDEG = 4
N_VLOCAL = 30
VH_ORDERS = np.array([0, 0, -1, -1, -1, -1] * 3 + [1, 1, 0, 0] * 3)


class ComplexInconsistencyError(RuntimeError):
    """A Sigma_h functional took different values on two triangles."""


@dataclass(frozen=True)
class VhLocalBasis:
    coeffs: np.ndarray  # (T, 30, 2, 5, 5)
    centers: np.ndarray
    scales: np.ndarray


def vh_monomials() -> np.ndarray:
    """The 30 vector monomials m e_c, shape (30, 2, 5, 5)."""
    out = np.zeros((N_VLOCAL, 2, VDEG + 1, VDEG + 1))
    k = 0
    for c in range(2):
        for i, j in exponents(VDEG):
            out[k, c, i, j] = 1.0
            k += 1
    return out


def _grad(coeffs, scales):
    inv = (1.0 / scales).reshape((-1,) + (1,) * (coeffs.ndim - 1))
    return polyder(coeffs, 1, 0) * inv, polyder(coeffs, 0, 1) * inv


def vh_functionals(coeffs: np.ndarray, geom: ElementGeometry, qdeg: int = 10) -> np.ndarray:
    """Apply the 30 local V_h functionals to fields (T, F, 2, n, n); returns (T, 30, F)."""
    T, F = coeffs.shape[:2]
    out = np.zeros((T, N_VLOCAL, F))
    gx, gy = _grad(coeffs, geom.scales)
    val = evaluate_local(coeffs, geom, geom.corners)  # (T, F, 2, 3)
    dx = evaluate_local(gx, geom, geom.corners)
    dy = evaluate_local(gy, geom, geom.corners)
    for v in range(3):
        block = [val[:, :, 0, v], val[:, :, 1, v], dx[:, :, 0, v], dy[:, :, 0, v], dx[:, :, 1, v], dy[:, :, 1, v]]
        out[:, 6 * v : 6 * v + 6] = np.stack(block, axis=1)

    div = gx[:, :, 0:1] + gy[:, :, 1:2]
    rule = edge_rule(qdeg)
    s, w = rule.points, rule.weights
    for l in range(3):
        pts, _, length = geom.edge_points(l, s)
        vv = evaluate_local(coeffs, geom, pts)  # (T, F, 2, q)
        dv = evaluate_local(div, geom, pts)[:, :, 0]
        wl = w[None, :] * length[:, None]
        mu_a = np.where(geom.edge_forward(l)[:, None], 1.0 - s, s)
        out[:, 18 + 4 * l] = np.einsum("tfq,tq->tf", vv[:, :, 0], wl)
        out[:, 18 + 4 * l + 1] = np.einsum("tfq,tq->tf", vv[:, :, 1], wl)
        out[:, 18 + 4 * l + 2] = np.einsum("tfq,tq->tf", dv, mu_a * wl)
        out[:, 18 + 4 * l + 3] = np.einsum("tfq,tq->tf", dv, (1.0 - mu_a) * wl)
    return out


def scaled_vh_gram(coeffs: np.ndarray, geom: ElementGeometry) -> np.ndarray:
    g = vh_functionals(coeffs, geom)
    h = geom.scales[:, None, None]
    return g * h ** (VH_ORDERS[None, None, :] - VH_ORDERS[None, :, None])


def build_vh_basis(geom: ElementGeometry, check: bool = True, cond_limit: float = 1e12) -> VhLocalBasis:
    """Dual basis of the V_h functionals by generalized Vandermonde inversion."""
    mono = np.ascontiguousarray(np.broadcast_to(vh_monomials(), (len(geom),) + vh_monomials().shape))
    A = vh_functionals(mono, geom)
    cond = np.linalg.cond(A)
    if np.any(~np.isfinite(cond)) or np.any(cond > cond_limit):
        raise DegenerateElementError("V_h functional matrix is singular")
    coef = np.linalg.inv(A)
    out = np.einsum("tmf,mcij->tfcij", coef, vh_monomials())
    if check:
        dev = np.max(np.abs(scaled_vh_gram(out, geom) - np.eye(N_VLOCAL)))
        if dev > 1e-10:
            raise RuntimeError(f"V_h Gram deviation {dev:.3e}")
    return VhLocalBasis(out, geom.centers, geom.scales)


def build_vh_map(mesh: Mesh) -> DofMap:
    T = mesh.n_triangles
    l2g = np.empty((T, N_VLOCAL), dtype=np.int64)
    for v in range(3):
        for k in range(6):
            l2g[:, 6 * v + k] = 6 * mesh.triangles[:, v] + k
    for l in range(3):
        for j in range(4):
            l2g[:, 18 + 4 * l + j] = 6 * mesh.n_vertices + 4 * mesh.tri_edges[:, l] + j
    return DofMap(6 * mesh.n_vertices + 4 * mesh.n_edges, l2g, np.ones_like(l2g))


def sym_curl(coeffs: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """sym curl of vector fields (T, F, 2, n, n) -> tensors (T, F, 3, n, n)."""
    gx, gy = _grad(coeffs, scales)
    s11 = -gy[:, :, 0]
    s12 = 0.5 * (gx[:, :, 0] - gy[:, :, 1])
    s22 = gx[:, :, 1]
    return np.stack([s11, s12, s22], axis=2)


def _trim(c: np.ndarray, degree: int = 3) -> np.ndarray:
    if np.any(np.abs(c[..., degree + 1 :, :]) > 0) or np.any(np.abs(c[..., :, degree + 1 :]) > 0):
        raise ValueError("field exceeds the stress degree")
    return c[..., : degree + 1, : degree + 1]


def local_sym_curl_values(mesh: Mesh, basis: VhLocalBasis | None = None) -> np.ndarray:
    """Sigma_h local functionals of sym curl of every local V_h basis function, (T, 30, 30)."""
    geom = ElementGeometry.from_mesh(mesh)
    basis = basis or build_vh_basis(geom)
    return apply_functionals(_trim(sym_curl(basis.coeffs, geom.scales)), geom)


def edge_identity_residuals(coeffs: np.ndarray, geom: ElementGeometry, qdeg: int = 8) -> np.ndarray:
    """Max residuals (T, 3) of the trace identities of sigma = sym curl v on all edges.

    With ``n`` obtained by rotating the unit tangent ``t`` by +90 degrees:
    ``n.sigma.n = n.d_t v``, ``t.sigma.n = t.d_t v - div v / 2`` and
    ``div sigma . n = d_t div v / 2``.
    """
    sig = sym_curl(coeffs, geom.scales)
    dsig = divergence(sig, geom.scales)
    gx, gy = _grad(coeffs, geom.scales)
    div = gx[:, :, 0:1] + gy[:, :, 1:2]
    ddx, ddy = _grad(div, geom.scales)
    s = edge_rule(qdeg).points
    out = np.zeros((len(geom), 3))

    def ev(c, pts):
        return evaluate_local(c, geom, pts)

    for l in range(3):
        pts, n_out, _ = geom.edge_points(l, s)
        t = np.column_stack([n_out[:, 1], -n_out[:, 0]])
        n = np.column_stack([-t[:, 1], t[:, 0]])
        tx, ty, nx, ny = (a[:, None, None] for a in (t[:, 0], t[:, 1], n[:, 0], n[:, 1]))
        S = ev(sig, pts)
        D = ev(dsig, pts)
        dtv = ev(gx, pts) * tx[..., None] + ev(gy, pts) * ty[..., None]  # (T, F, 2, q)
        dv = ev(div, pts)[:, :, 0]
        dtdiv = ev(ddx, pts)[:, :, 0] * tx + ev(ddy, pts)[:, :, 0] * ty
        sn1 = S[:, :, 0] * nx + S[:, :, 1] * ny
        sn2 = S[:, :, 1] * nx + S[:, :, 2] * ny
        r1 = nx * sn1 + ny * sn2 - (nx * dtv[:, :, 0] + ny * dtv[:, :, 1])
        r2 = tx * sn1 + ty * sn2 - (tx * dtv[:, :, 0] + ty * dtv[:, :, 1] - 0.5 * dv)
        r3 = D[:, :, 0] * nx + D[:, :, 1] * ny - 0.5 * dtdiv
        out[:, l] = np.max(np.abs(np.stack([r1, r2, r3])), axis=(0, 2, 3))
    return out


def _consistent_scatter(values: np.ndarray, smap: DofMap, tol: float) -> tuple[np.ndarray, float]:
    """Average per-triangle functional values into global ones and measure the spread."""
    g = (values * smap.signs).ravel()  # global functional = sign * local functional
    idx = smap.local_to_global.ravel()
    n = np.bincount(idx, minlength=smap.n_dofs).astype(float)
    mean = np.bincount(idx, weights=g, minlength=smap.n_dofs) / np.maximum(n, 1)
    scale = max(np.max(np.abs(mean)), 1e-300)
    mismatch = float(np.max(np.abs(g - mean[idx])) / scale) if len(g) else 0.0
    if mismatch > tol:
        raise ComplexInconsistencyError(f"relative cross-element mismatch {mismatch:.3e} exceeds {tol:.1e}")
    return mean, mismatch


def sym_curl_to_sigma(mesh: Mesh, v: np.ndarray, tol: float = 1e-9, basis: VhLocalBasis | None = None) -> np.ndarray:
    """Global Sigma_h coefficients of sym curl v_h for global V_h coefficients ``v``."""
    vmap = build_vh_map(mesh)
    smap = build_sigma_map(mesh)
    L = local_sym_curl_values(mesh, basis)
    local = np.einsum("tsf,tf->ts", L, vmap.gather(np.asarray(v, dtype=float)))
    sigma, _ = _consistent_scatter(local, smap, tol)
    return sigma


def sym_curl_matrix(mesh: Mesh, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Dense matrix of sym curl from V_h to Sigma_h coefficients, with the consistency spread."""
    vmap = build_vh_map(mesh)
    smap = build_sigma_map(mesh)
    L = local_sym_curl_values(mesh)
    T = mesh.n_triangles
    n_s, n_v = smap.n_dofs, vmap.n_dofs
    rows = np.broadcast_to(smap.local_to_global[:, :, None], L.shape).ravel()
    cols = np.broadcast_to(vmap.local_to_global[:, None, :], L.shape).ravel()
    g = (L * smap.signs[:, :, None]).ravel()
    S = sp.coo_matrix((g, (rows, cols)), shape=(n_s, n_v)).toarray()
    C = sp.coo_matrix((np.ones_like(g), (rows, cols)), shape=(n_s, n_v)).toarray()
    n = np.bincount(smap.local_to_global.ravel(), minlength=n_s).astype(float)[:, None]
    mean = S / n
    scale = max(np.abs(mean).max(), 1e-300) if T else 1.0
    # a triangle that does not see column c contributes an implicit zero
    dev = max(np.max(np.abs(g - mean[rows, cols])), np.max(np.where(C < n, np.abs(mean), 0.0)))
    mismatch = float(dev / scale)
    if mismatch > tol:
        raise ComplexInconsistencyError(f"relative cross-element mismatch {mismatch:.3e} exceeds {tol:.1e}")
    return mean, mismatch


def numerical_rank(A: np.ndarray, rtol: float = 1e-8) -> int:
    """Rank from a column-pivoted QR with threshold ``rtol * |R[0, 0]|``."""
    if A.size == 0:
        return 0
    R = la.qr(np.asarray(A, dtype=float), mode="r", pivoting=True)[0]
    d = np.abs(np.diag(R))
    if d[0] == 0:
        return 0
    return int(np.sum(d > rtol * d[0]))


def rt_field(a1: float, a2: float, b: float, mesh: Mesh) -> np.ndarray:
    """Global V_h coefficients of the field (a1 + b x, a2 + b y)."""
    vmap = build_vh_map(mesh)
    out = np.zeros(vmap.n_dofs)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    V = np.arange(mesh.n_vertices)
    out[6 * V] = a1 + b * x
    out[6 * V + 1] = a2 + b * y
    out[6 * V + 2] = b
    out[6 * V + 5] = b
    L = mesh.edge_lengths
    mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    E = np.arange(mesh.n_edges)
    base = 6 * mesh.n_vertices + 4 * E
    out[base] = (a1 + b * mid[:, 0]) * L
    out[base + 1] = (a2 + b * mid[:, 1]) * L
    # div v = 2 b and int_e mu = L / 2
    out[base + 2] = b * L
    out[base + 3] = b * L
    return out


@dataclass
class ComplexReport:
    n_vertices: int
    n_edges: int
    n_triangles: int
    n_sigma: int
    rank_B: int
    nullity_B: int
    expected_nullity: int
    rank_symcurl: int
    max_B_symcurl: float
    symcurl_mismatch: float
    rt_max: float

    @property
    def passed(self) -> bool:
        return (
            self.rank_B == 3 * self.n_triangles
            and self.nullity_B == self.expected_nullity
            and self.rank_symcurl == self.expected_nullity
            and self.max_B_symcurl < 1e-9
            and self.rt_max < 1e-9
        )


def check_complex(mesh: Mesh, B=None, max_sigma: int = 2000) -> ComplexReport:
    """Rank and nullity identities for B and sym curl on a small mesh."""
    from .assembly import assemble_divdiv, build_bases

    smap = build_sigma_map(mesh)
    if smap.n_dofs > max_sigma:
        raise ValueError(f"{smap.n_dofs} stress unknowns exceed the dense limit {max_sigma}")
    if B is None:
        B = assemble_divdiv(mesh, build_bases(mesh), smap)
    Bd = B.toarray() if sp.issparse(B) else np.asarray(B)
    rank_B = numerical_rank(Bd)
    SC, mismatch = sym_curl_matrix(mesh)
    rank_sc = numerical_rank(SC)
    BSC = Bd @ SC
    scale = max(np.abs(Bd).max() * np.abs(SC).max(), 1e-300)
    v_rt = rt_field(0.3, -1.2, 0.7, mesh)
    # the image is round-off sized, so a relative consistency test is meaningless here
    rt = sym_curl_to_sigma(mesh, v_rt, tol=np.inf) / max(np.abs(SC).max() * np.abs(v_rt).max(), 1e-300)
    return ComplexReport(
        mesh.n_vertices,
        mesh.n_edges,
        mesh.n_triangles,
        smap.n_dofs,
        rank_B,
        smap.n_dofs - rank_B,
        6 * mesh.n_vertices + 4 * mesh.n_edges - 3,
        rank_sc,
        float(np.abs(BSC).max() / scale),
        mismatch,
        float(np.abs(rt).max()),
    )
