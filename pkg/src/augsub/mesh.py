"""Uniform triangulations of the unit square and regular (red) refinement.

All meshes produced here triangulate (0,1)^2 with an n-by-n grid of squares,
each square split by its lower-left to upper-right diagonal.  Regular
refinement quadruples the triangle count and keeps that structure, so the
geometry of any mesh in this family is fully described by its grid
parameter ``grid_n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BOUNDARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangulation of the unit square.

    Attributes
    ----------
    vertices : ndarray, shape (nv, 2)
        Vertex coordinates.
    triangles : ndarray, shape (nt, 3)
        Vertex indices per triangle, counterclockwise.
    boundary_vertex_flags : ndarray of bool, shape (nv,)
        True for vertices on the boundary of the unit square.
    level : int
        Number of regular refinements applied since construction.
    grid_n : int
        Grid parameter: the mesh geometry equals the canonical n-by-n
        split-square triangulation (possibly renumbered).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertex_flags: np.ndarray
    level: int = 0
    grid_n: int = 1

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]


@dataclass(frozen=True)
class MeshStats:
    mesh_size: float
    num_vertices: int
    num_triangles: int
    num_interior_vertices: int


def _boundary_flags(vertices: np.ndarray) -> np.ndarray:
    x, y = vertices[:, 0], vertices[:, 1]
    near0 = lambda v: np.abs(v) <= BOUNDARY_TOL
    return near0(x) | near0(x - 1.0) | near0(y) | near0(y - 1.0)


def build_uniform(n: int) -> TriMesh:
    """Build the n-by-n uniform triangulation of the unit square.

    Vertices are numbered row-major by (y, x); each grid square is split
    by its lower-left to upper-right diagonal.  Yields (n+1)^2 vertices and
    2 n^2 triangles with mesh size sqrt(2)/n.
    """
    if n < 1:
        raise ValueError(f"grid parameter must be a positive integer, got {n}")
    coords = np.arange(n + 1) / n
    xg, yg = np.meshgrid(coords, coords)  # row i is y = i/n
    vertices = np.column_stack([xg.ravel(), yg.ravel()])

    ix, iy = np.meshgrid(np.arange(n), np.arange(n))
    ll = (iy * (n + 1) + ix).ravel()
    lr = ll + 1
    ul = ll + (n + 1)
    ur = ul + 1
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    return TriMesh(
        vertices=vertices,
        triangles=triangles,
        boundary_vertex_flags=_boundary_flags(vertices),
        level=0,
        grid_n=n,
    )


def _unique_edges(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique undirected edges and the per-triangle edge index map.

    Returns (edges, tri_edges) where edges has shape (ne, 2) with sorted
    vertex pairs in lexicographic order, and tri_edges[t, i] is the edge
    opposite local vertex i of triangle t.
    """
    v0, v1, v2 = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    raw = np.concatenate(
        [np.column_stack([v1, v2]), np.column_stack([v0, v2]), np.column_stack([v0, v1])]
    )
    raw.sort(axis=1)
    edges, inverse = np.unique(raw, axis=0, return_inverse=True)
    tri_edges = inverse.reshape(3, -1).T
    return edges, tri_edges


def refine_regular(mesh: TriMesh) -> TriMesh:
    """Split each triangle into four congruent children via edge midpoints."""
    edges, tri_edges = _unique_edges(mesh.triangles)
    midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    nv = mesh.num_vertices
    vertices = np.vstack([mesh.vertices, midpoints])

    t = mesh.triangles
    m12 = nv + tri_edges[:, 0]  # midpoint opposite v0, i.e. on edge (v1, v2)
    m02 = nv + tri_edges[:, 1]
    m01 = nv + tri_edges[:, 2]
    children = np.empty((4 * mesh.num_triangles, 3), dtype=np.int64)
    children[0::4] = np.column_stack([t[:, 0], m01, m02])
    children[1::4] = np.column_stack([t[:, 1], m12, m01])
    children[2::4] = np.column_stack([t[:, 2], m02, m12])
    children[3::4] = np.column_stack([m01, m12, m02])

    return TriMesh(
        vertices=vertices,
        triangles=children,
        boundary_vertex_flags=_boundary_flags(vertices),
        level=mesh.level + 1,
        grid_n=2 * mesh.grid_n,
    )


def triangle_areas(mesh: TriMesh) -> np.ndarray:
    """Signed triangle areas (positive for counterclockwise orientation)."""
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def mesh_stats(mesh: TriMesh) -> MeshStats:
    """Mesh size (max triangle diameter) and entity counts."""
    p = mesh.vertices[mesh.triangles]
    edge_len = np.stack(
        [
            np.linalg.norm(p[:, 1] - p[:, 2], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 1], axis=1),
        ]
    )
    n_boundary = int(np.count_nonzero(mesh.boundary_vertex_flags))
    return MeshStats(
        mesh_size=float(edge_len.max()),
        num_vertices=mesh.num_vertices,
        num_triangles=mesh.num_triangles,
        num_interior_vertices=mesh.num_vertices - n_boundary,
    )


def validate_mesh(mesh: TriMesh) -> None:
    """Raise ValueError if the mesh violates orientation or conformity.

    Checks: positive triangle areas, no duplicated vertex coordinates
    (a shared edge must be shared through vertex indices), every edge used
    by at most two triangles, single-use edges lying on the boundary, and
    boundary flags consistent with vertex coordinates.
    """
    areas = triangle_areas(mesh)
    if not np.all(areas > 0):
        raise ValueError("mesh has non-positive triangle areas")

    rounded = np.round(mesh.vertices / BOUNDARY_TOL).astype(np.int64)
    if np.unique(rounded, axis=0).shape[0] != mesh.num_vertices:
        raise ValueError("mesh has duplicated vertex coordinates")

    edges, _ = _unique_edges(mesh.triangles)
    raw = np.sort(
        np.concatenate(
            [mesh.triangles[:, [1, 2]], mesh.triangles[:, [0, 2]], mesh.triangles[:, [0, 1]]]
        ),
        axis=1,
    )
    _, counts = np.unique(raw, axis=0, return_counts=True)
    if counts.max() > 2:
        raise ValueError("mesh edge shared by more than two triangles")
    single = edges[counts == 1]
    flags = mesh.boundary_vertex_flags
    if not np.all(flags[single].all(axis=1)):
        raise ValueError("interior edge used by only one triangle (hanging node?)")

    if not np.array_equal(flags, _boundary_flags(mesh.vertices)):
        raise ValueError("boundary_vertex_flags inconsistent with coordinates")


def write_mesh(mesh: TriMesh, path) -> None:
    """Dump a mesh in the plain-text interchange format.

    One header line ``vertices <V> triangles <T>``, then V lines
    ``x y flag`` and T lines ``i j k`` with 0-based indices, LF endings.
    """
    lines = [f"vertices {mesh.num_vertices} triangles {mesh.num_triangles}"]
    for (x, y), flag in zip(mesh.vertices, mesh.boundary_vertex_flags):
        lines.append(f"{x:.17g} {y:.17g} {int(flag)}")
    for i, j, k in mesh.triangles:
        lines.append(f"{i} {j} {k}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
