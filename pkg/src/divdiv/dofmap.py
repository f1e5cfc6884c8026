"""Global numbering of stress and displacement unknowns.

Stress unknowns: ``3 v + c`` for component ``c`` of the value at vertex
``v``, then ``3 #V + 7 e + j`` for the seven moments of edge ``e`` in the
local order of :mod:`divdiv.ref_basis`. A global basis function restricted
to a triangle is ``sign * local function``; the sign is +1 for vertex
unknowns and the stored outward-normal sign for edge unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh


@dataclass(frozen=True)
class DofMap:
    n_dofs: int
    local_to_global: np.ndarray  # (T, n_local)
    signs: np.ndarray  # (T, n_local), entries +-1

    @property
    def n_local(self) -> int:
        return self.local_to_global.shape[1]

    def gather(self, x: np.ndarray) -> np.ndarray:
        """Local coefficient vectors (T, n_local) of a global vector."""
        return x[self.local_to_global] * self.signs

    def usage(self) -> np.ndarray:
        """How many triangles reference each global unknown."""
        return np.bincount(self.local_to_global.ravel(), minlength=self.n_dofs)


def sigma_dimension(mesh: Mesh) -> int:
    return 3 * mesh.n_vertices + 7 * mesh.n_edges


def build_sigma_map(mesh: Mesh) -> DofMap:
    T = mesh.n_triangles
    l2g = np.empty((T, 30), dtype=np.int64)
    signs = np.ones((T, 30), dtype=np.int64)
    for v in range(3):
        for c in range(3):
            l2g[:, 3 * v + c] = 3 * mesh.triangles[:, v] + c
    base = 3 * mesh.n_vertices
    for l in range(3):
        for j in range(7):
            l2g[:, 9 + 7 * l + j] = base + 7 * mesh.tri_edges[:, l] + j
            signs[:, 9 + 7 * l + j] = mesh.tri_edge_signs[:, l]
    l2g.setflags(write=False)
    signs.setflags(write=False)
    return DofMap(sigma_dimension(mesh), l2g, signs)


def build_u_map(mesh: Mesh) -> DofMap:
    """Three barycentric P1 unknowns per triangle, no coupling."""
    T = mesh.n_triangles
    l2g = np.arange(3 * T, dtype=np.int64).reshape(T, 3)
    signs = np.ones((T, 3), dtype=np.int64)
    l2g.setflags(write=False)
    signs.setflags(write=False)
    return DofMap(3 * T, l2g, signs)
