"""Assembly of the mixed saddle-point system.

Stress mass ``M`` (Frobenius inner product), coupling ``B[r, c] =
(div div tau_c, v_r)``, displacement mass ``M_u`` and load ``-(f, v_r)``.
Element loops run over fixed chunks and are merged in chunk order, so
the assembled matrices do not depend on ``DIVDIV_THREADS``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .dofmap import DofMap, build_sigma_map, build_u_map
from .mesh import Mesh
from .parallel import map_chunks
from .problems import Manufactured
from .quadrature import triangle_rule
from .ref_basis import ElementGeometry, LocalBasis, correct_basis, divdiv, element_mass, evaluate_local

MASS_DEGREE = 8
LOAD_DEGREE = 14
CORNER_DEGREE = 20


def _bary(ref_points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates (q, 3) of reference points."""
    x, y = ref_points[:, 0], ref_points[:, 1]
    return np.column_stack([1.0 - x - y, x, y])


def _slice_basis(basis: LocalBasis, sl: slice) -> LocalBasis:
    return LocalBasis(basis.coeffs[sl], basis.centers[sl], basis.scales[sl])


def build_bases(mesh: Mesh, check: bool = True) -> LocalBasis:
    """Local stress bases on every triangle of ``mesh``."""
    parts = map_chunks(
        lambda sl: correct_basis(ElementGeometry.from_mesh(mesh, sl), check=check).coeffs,
        mesh.n_triangles,
    )
    return LocalBasis(np.concatenate(parts), mesh.centroids, ElementGeometry.from_mesh(mesh).scales)


def _scatter(local: list[np.ndarray], rows: DofMap, cols: DofMap, shape) -> sp.csr_matrix:
    K = np.concatenate(local)
    vals = K * rows.signs[:, :, None] * cols.signs[:, None, :]
    r = np.broadcast_to(rows.local_to_global[:, :, None], K.shape)
    c = np.broadcast_to(cols.local_to_global[:, None, :], K.shape)
    A = sp.coo_matrix((vals.ravel(), (r.ravel(), c.ravel())), shape=shape).tocsr()
    A.sum_duplicates()
    return A


def assemble_mass(mesh: Mesh, basis: LocalBasis, dofmap: DofMap, qdeg: int = MASS_DEGREE) -> sp.csr_matrix:
    if qdeg < 6:
        raise ValueError(f"stress mass needs quadrature degree >= 6, got {qdeg}")

    def local(sl):
        return element_mass(_slice_basis(basis, sl), ElementGeometry.from_mesh(mesh, sl), qdeg)

    n = dofmap.n_dofs
    M = _scatter(map_chunks(local, mesh.n_triangles), dofmap, dofmap, (n, n))
    return ((M + M.T) * 0.5).tocsr()


def local_divdiv(mesh: Mesh, basis: LocalBasis, sl=slice(None)) -> np.ndarray:
    """Element matrices (T, 3, 30) of (div div tau_c, lambda_r)_K."""
    rule = triangle_rule(4)
    geom = ElementGeometry.from_mesh(mesh, sl)
    dd = divdiv(basis.coeffs[sl], basis.scales[sl])[:, :, None]  # (T, 30, 1, n, n)
    vals = evaluate_local(dd, geom, geom.map_points(rule.points))[:, :, 0]  # (T, 30, q)
    lam = _bary(rule.points)
    return np.einsum("tcq,qr,q,t->trc", vals, lam, rule.weights, geom.J)


def assemble_divdiv(mesh: Mesh, basis: LocalBasis, sigma_map: DofMap, u_map: DofMap | None = None) -> sp.csr_matrix:
    u_map = u_map or build_u_map(mesh)
    parts = map_chunks(lambda sl: local_divdiv(mesh, basis, sl), mesh.n_triangles)
    return _scatter(parts, u_map, sigma_map, (u_map.n_dofs, sigma_map.n_dofs))


def assemble_u_mass(mesh: Mesh, u_map: DofMap | None = None) -> sp.csr_matrix:
    """Block-diagonal P1 mass, blocks ``|K| / 12 (1 + delta_ij)``."""
    u_map = u_map or build_u_map(mesh)
    block = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = mesh.areas[:, None, None] * block
    return _scatter([local], u_map, u_map, (u_map.n_dofs, u_map.n_dofs))


def element_degrees(mesh: Mesh, problem: Manufactured, qdeg: int, corner_qdeg: int) -> np.ndarray:
    """Quadrature degree per triangle, raised on triangles touching the singular point."""
    deg = np.full(mesh.n_triangles, qdeg)
    if problem.singular_point is not None:
        d = np.linalg.norm(mesh.vertices - np.asarray(problem.singular_point), axis=1)
        hit = np.flatnonzero(d < 1e-12)
        if len(hit):
            deg[np.isin(mesh.triangles, hit).any(axis=1)] = max(qdeg, corner_qdeg)
    return deg


def quadrature_groups(mesh: Mesh, degrees: np.ndarray) -> list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """Triangles grouped by degree as (elems, mapped points, weights * J, reference points)."""
    groups = []
    for d in np.unique(degrees):
        elems = np.flatnonzero(degrees == d)
        rule = triangle_rule(int(d))
        geom = ElementGeometry.from_mesh(mesh, elems)
        pts = geom.map_points(rule.points)
        groups.append((elems, pts, rule.weights[None, :] * geom.J[:, None], rule.points))
    return groups


def assemble_load(
    mesh: Mesh,
    problem: Manufactured,
    u_map: DofMap | None = None,
    qdeg: int = LOAD_DEGREE,
    corner_qdeg: int = CORNER_DEGREE,
    f=None,
) -> np.ndarray:
    """Right-hand side ``-(f, lambda_r)_K``; ``f`` overrides ``problem.f``."""
    u_map = u_map or build_u_map(mesh)
    func = f if f is not None else problem.f
    local = np.zeros((mesh.n_triangles, 3))
    for elems, pts, w, ref in quadrature_groups(mesh, element_degrees(mesh, problem, qdeg, corner_qdeg)):
        fv = func(pts)
        local[elems] = -np.einsum("tq,qr,tq->tr", fv, _bary(ref), w)
    load = np.zeros(u_map.n_dofs)
    np.add.at(load, u_map.local_to_global, local * u_map.signs)
    return load


@dataclass
class SparseSystem:
    M: sp.csr_matrix
    B: sp.csr_matrix
    load: np.ndarray
    M_u: sp.csr_matrix
    mesh: Mesh
    basis: LocalBasis
    sigma_map: DofMap
    u_map: DofMap
    meta: dict = field(default_factory=dict)

    @property
    def n_sigma(self) -> int:
        return self.M.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[0]

    def kkt(self) -> sp.csr_matrix:
        return sp.bmat([[self.M, self.B.T], [self.B, None]], format="csr")

    def rhs(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.n_sigma), self.load])


def assemble_system(
    mesh: Mesh,
    problem: Manufactured | None = None,
    mass_degree: int = MASS_DEGREE,
    load_degree: int = LOAD_DEGREE,
    corner_degree: int = CORNER_DEGREE,
) -> SparseSystem:
    """Build bases, DOF maps and all matrices; a missing problem gives a zero load."""
    basis = build_bases(mesh)
    smap = build_sigma_map(mesh)
    umap = build_u_map(mesh)
    M = assemble_mass(mesh, basis, smap, mass_degree)
    B = assemble_divdiv(mesh, basis, smap, umap)
    Mu = assemble_u_mass(mesh, umap)
    if problem is None:
        load = np.zeros(umap.n_dofs)
    else:
        load = assemble_load(mesh, problem, umap, load_degree, corner_degree)
    return SparseSystem(M, B, load, Mu, mesh, basis, smap, umap)


def export_matrix_market(system: SparseSystem, directory) -> list[Path]:
    """Write M.mtx and B.mtx into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "M.mtx", out / "B.mtx"]
    scipy.io.mmwrite(str(paths[0]), system.M)
    scipy.io.mmwrite(str(paths[1]), system.B)
    return paths
