"""Conforming triangulations with globally oriented edges.

Conventions used throughout the package:

* triangles are stored counterclockwise, so every affine map has J > 0;
* local edge ``i`` of a triangle is the edge opposite local vertex ``i``,
  i.e. it joins local vertices ``i+1`` and ``i+2`` (mod 3);
* a global edge runs from its smaller vertex index ``a`` to the larger
  one ``b``; its unit normal is the unit tangent rotated by +90 degrees;
* ``tri_edge_signs[K, i]`` is ``n_e . n_out`` for local edge ``i`` of K.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised for invalid or degenerate triangulations."""


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    tri_edge_signs: np.ndarray
    edge_tris: np.ndarray
    domain: str = "custom"
    level: int = 1

    @classmethod
    def from_triangles(cls, vertices, triangles, domain: str = "custom", level: int = 1) -> "Mesh":
        """Build edge connectivity and orientation data from raw arrays.

        Clockwise triangles are reordered; zero-area triangles raise
        :class:`MeshError`.
        """
        vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError("triangle references a vertex that does not exist")

        p = vertices[triangles]
        det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
            p[:, 2, 0] - p[:, 0, 0]
        ) * (p[:, 1, 1] - p[:, 0, 1])
        scale = np.max(np.abs(p - p[:, :1]), axis=(1, 2)) ** 2
        if np.any(np.abs(det) <= 1e-14 * scale):
            bad = int(np.argmax(np.abs(det) <= 1e-14 * scale))
            raise MeshError(f"triangle {bad} is degenerate (zero area)")
        flip = det < 0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]

        local = np.stack(
            [triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1
        )
        key = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        tri_edges = inverse.reshape(-1, 3)

        counts = np.bincount(inverse, minlength=len(edges))
        if np.any(counts > 2):
            raise MeshError("non-manifold edge shared by more than two triangles")
        edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
        owner = np.repeat(np.arange(len(triangles)), 3)
        order = np.argsort(inverse, kind="stable")
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        edge_tris[inverse[order][first], 0] = owner[order][first]
        edge_tris[inverse[order][~first], 1] = owner[order][~first]

        # Outward normal of a ccw edge P->Q is the tangent rotated by -90
        # degrees, the global normal is rotated by +90 from a->b: they agree
        # exactly when the ccw traversal runs from b to a.
        signs = np.where(local[..., 0] < local[..., 1], -1, 1).astype(np.int64)

        for arr in (vertices, triangles, edges, tri_edges, signs, edge_tris):
            arr.setflags(write=False)
        return cls(vertices, triangles, edges, tri_edges, signs, edge_tris, domain, level)

    # ------------------------------------------------------------------ counts
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    # ---------------------------------------------------------------- geometry
    @cached_property
    def corners(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (T, 3, 2)."""
        return self.vertices[self.triangles]

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine map matrices B = [x2 - x1, x3 - x1], shape (T, 2, 2)."""
        c = self.corners
        return np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)

    @cached_property
    def dets(self) -> np.ndarray:
        return np.linalg.det(self.jacobians)

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.abs(self.dets)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def edge_vectors(self) -> np.ndarray:
        v = self.vertices
        return v[self.edges[:, 1]] - v[self.edges[:, 0]]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edge_vectors, axis=1)

    @cached_property
    def edge_tangents(self) -> np.ndarray:
        return self.edge_vectors / self.edge_lengths[:, None]

    @cached_property
    def edge_normals(self) -> np.ndarray:
        t = self.edge_tangents
        return np.column_stack([-t[:, 1], t[:, 0]])

    @cached_property
    def diameters(self) -> np.ndarray:
        return self.edge_lengths[self.tri_edges].max(axis=1)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def outward_normals(self) -> np.ndarray:
        """Unit outward normal of each local edge, shape (T, 3, 2)."""
        return self.edge_normals[self.tri_edges] * self.tri_edge_signs[..., None]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return self.edge_tris[:, 1] < 0

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edges].ravel()] = True
        return mask

    def min_angle(self) -> float:
        c = self.corners
        angles = []
        for i in range(3):
            a = c[:, (i + 1) % 3] - c[:, i]
            b = c[:, (i + 2) % 3] - c[:, i]
            cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return float(np.min(angles))

    def euler_defect(self) -> int:
        """#E + 1 - #V - #T; zero on simply connected domains."""
        return self.n_edges + 1 - self.n_vertices - self.n_triangles

    def validate(self) -> None:
        """Raise :class:`MeshError` unless orientation and edge data are consistent."""
        if np.any(self.dets <= 0):
            raise MeshError("triangle with non-positive Jacobian")
        interior = ~self.boundary_edges
        k0, k1 = self.edge_tris[interior].T
        e = np.flatnonzero(interior)
        s0 = self._sign_of(k0, e)
        s1 = self._sign_of(k1, e)
        if np.any(s0 != -s1):
            raise MeshError("interior edge without opposite outward-normal signs")

    def _sign_of(self, tris, edges):
        local = np.argmax(self.tri_edges[tris] == edges[:, None], axis=1)
        return self.tri_edge_signs[tris, local]


# ------------------------------------------------------------------ builders
def _grid_triangles(n_x: int, n_y: int, keep=None):
    """Triangles of an n_x by n_y grid split along the SW-NE diagonal."""
    def vid(i, j):
        return j * (n_x + 1) + i

    tris = []
    for j in range(n_y):
        for i in range(n_x):
            if keep is not None and not keep(i, j):
                continue
            sw, se, ne, nw = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((sw, se, ne))
            tris.append((sw, ne, nw))
    return np.array(tris, dtype=np.int64)


def _compact(vertices, triangles):
    used = np.unique(triangles)
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return vertices[used], remap[triangles]


def build_unit_square(n: int) -> Mesh:
    """Uniform n-by-n grid on (0,1)^2, each square cut by its NE diagonal."""
    if n < 1:
        raise ValueError(f"grid count must be >= 1, got {n}")
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    return Mesh.from_triangles(vertices, _grid_triangles(n, n), domain="square")


def build_lshape(n: int) -> Mesh:
    """(-1,1)^2 minus [0,1]x[-1,0] with squares of side 1/n.

    The reentrant corner (0, 0) is always a vertex.
    """
    if n < 1:
        raise ValueError(f"grid count must be >= 1, got {n}")
    s = np.linspace(-1.0, 1.0, 2 * n + 1)
    X, Y = np.meshgrid(s, s)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    tris = _grid_triangles(2 * n, 2 * n, keep=lambda i, j: not (i >= n and j < n))
    vertices, tris = _compact(vertices, tris)
    return Mesh.from_triangles(vertices, tris, domain="lshape")


def refine_red(mesh: Mesh) -> Mesh:
    """Split every triangle into four through its edge midpoints."""
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    v = mesh.triangles
    m = nv + mesh.tri_edges  # m[:, i] is the midpoint opposite vertex i
    children = np.concatenate(
        [
            np.column_stack([v[:, 0], m[:, 2], m[:, 1]]),
            np.column_stack([m[:, 2], v[:, 1], m[:, 0]]),
            np.column_stack([m[:, 1], m[:, 0], v[:, 2]]),
            np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
        ]
    )
    return Mesh.from_triangles(vertices, children, domain=mesh.domain, level=mesh.level + 1)


def perturb(mesh: Mesh, factor: float, seed: int = 0) -> Mesh:
    """Move interior vertices by at most ``factor`` times the shortest incident edge.

    The offsets come from ``numpy.random.default_rng(seed)``, so the
    result is reproducible. Boundary vertices stay fixed.
    """
    if not 0.0 <= factor <= 0.3:
        raise ValueError(f"perturbation factor must lie in [0, 0.3], got {factor}")
    if factor == 0.0:
        return mesh
    h_local = np.full(mesh.n_vertices, np.inf)
    for k in range(2):
        np.minimum.at(h_local, mesh.edges[:, k], mesh.edge_lengths)
    rng = np.random.default_rng(seed)
    radius = rng.random(mesh.n_vertices)
    angle = rng.random(mesh.n_vertices) * 2.0 * np.pi
    offset = (factor * h_local * radius)[:, None] * np.column_stack([np.cos(angle), np.sin(angle)])
    offset[mesh.boundary_vertices] = 0.0
    vertices = mesh.vertices + offset

    p = vertices[mesh.triangles]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 2, 0] - p[:, 0, 0]
    ) * (p[:, 1, 1] - p[:, 0, 1])
    if np.any(det <= 0):
        raise MeshError(f"perturbation inverted {int(np.sum(det <= 0))} triangle(s)")
    return Mesh.from_triangles(vertices, mesh.triangles, domain=mesh.domain, level=mesh.level)


# ------------------------------------------------------------------------ I/O
def write_mesh(mesh: Mesh, path) -> None:
    """Header ``#V #T``, one ``x y`` line per vertex, one ``i j k`` line per triangle."""
    lines = [f"{mesh.n_vertices} {mesh.n_triangles}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, domain: str = "custom") -> Mesh:
    rows = Path(path).read_text().split("\n")
    nv, nt = (int(s) for s in rows[0].split())
    vertices = np.array([[float(s) for s in r.split()] for r in rows[1 : 1 + nv]])
    triangles = np.array([[int(s) for s in r.split()] for r in rows[1 + nv : 1 + nv + nt]])
    return Mesh.from_triangles(vertices.reshape(-1, 2), triangles.reshape(-1, 3), domain=domain)
