"""Lagrange P1..P4 finite element spaces on triangle meshes.

Provides degree-of-freedom management with homogeneous Dirichlet
elimination, quadrature assembly of variable-coefficient stiffness and
mass forms, nodal interpolation, and prolongation between nested spaces
(same mesh with raised degree, refined mesh with equal degree, or both).

Degrees of freedom live on the uniform barycentric lattice of each
triangle and are numbered lexicographically by (y, x) coordinate, so all
assembled objects are reproducible bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import BOUNDARY_TOL, TriMesh, triangle_areas
from .quadrature import triangle_rule

MAX_DEGREE = 4

# gradients of the barycentric coordinates on the reference triangle
# v0=(0,0), v1=(1,0), v2=(0,1):  lam0 = 1-x-y, lam1 = x, lam2 = y
_BARY_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def lattice_multi_indices(degree: int) -> np.ndarray:
    """Barycentric integer triples (i0,i1,i2) with sum `degree`, one per node.

    Ordered lexicographically by (i2, i1), i.e. bottom-to-top rows of the
    reference triangle.
    """
    out = []
    for i2 in range(degree + 1):
        for i1 in range(degree + 1 - i2):
            out.append((degree - i1 - i2, i1, i2))
    return np.array(out, dtype=np.int64)


def _silvester_1d(order: int, degree: int, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of P_order(t) = prod_{r<order} (degree*t - r)/(order - r)."""
    t = np.asarray(t, dtype=float)
    val = np.ones_like(t)
    for r in range(order):
        val = val * (degree * t - r) / (order - r)
    der = np.zeros_like(t)
    for s in range(order):
        term = np.full_like(t, degree / (order - s))
        for r in range(order):
            if r != s:
                term = term * (degree * t - r) / (order - r)
        der += term
    return val, der


def basis_values(degree: int, bary: np.ndarray) -> np.ndarray:
    """Lagrange basis values at barycentric points; shape (npts, nloc)."""
    multi = lattice_multi_indices(degree)
    bary = np.atleast_2d(np.asarray(bary, dtype=float))
    vals = np.ones((bary.shape[0], multi.shape[0]))
    for m in range(3):
        for j, order in enumerate(multi[:, m]):
            v, _ = _silvester_1d(int(order), degree, bary[:, m])
            vals[:, j] *= v
    return vals


def basis_gradients(degree: int, bary: np.ndarray) -> np.ndarray:
    """Reference-coordinate basis gradients at barycentric points; (npts, nloc, 2)."""
    multi = lattice_multi_indices(degree)
    bary = np.atleast_2d(np.asarray(bary, dtype=float))
    npts, nloc = bary.shape[0], multi.shape[0]
    P = np.empty((3, nloc, npts))
    dP = np.empty((3, nloc, npts))
    for m in range(3):
        for j, order in enumerate(multi[:, m]):
            P[m, j], dP[m, j] = _silvester_1d(int(order), degree, bary[:, m])
    grads = np.zeros((npts, nloc, 2))
    for m in range(3):
        others = [o for o in range(3) if o != m]
        partial = dP[m] * P[others[0]] * P[others[1]]  # d/d lam_m, shape (nloc, npts)
        grads += partial.T[:, :, None] * _BARY_GRADS[m]
    return grads


@dataclass(frozen=True, eq=False)
class FeSpace:
    """Lagrange space of the given degree with Dirichlet nodes eliminated.

    Attributes
    ----------
    mesh : TriMesh
    degree : int
    dof_coords : ndarray, shape (ndof_total, 2)
        Coordinates of every node, boundary included, in global numbering.
    cell_to_dof : ndarray, shape (nt, nloc)
        Global node index for each local lattice node of each triangle.
    interior_dofs : ndarray
        Global indices of non-boundary nodes, ascending.
    """

    mesh: TriMesh
    degree: int
    dof_coords: np.ndarray
    cell_to_dof: np.ndarray
    interior_dofs: np.ndarray
    _full_to_interior: np.ndarray = field(repr=False, default=None)

    @property
    def ndof_total(self) -> int:
        return self.dof_coords.shape[0]

    @property
    def num_interior(self) -> int:
        return self.interior_dofs.shape[0]

    def interior_index(self, full_index):
        """Map global node index -> interior index (-1 for boundary nodes)."""
        return self._full_to_interior[full_index]


def build_space(mesh: TriMesh, degree: int) -> FeSpace:
    """Build the Lagrange space of the given degree on `mesh`.

    Shared edge and vertex nodes get one global index (built from mesh
    topology, so conformity is exact); the final numbering is
    lexicographic by (y, x).
    """
    if not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported degree {degree}; expected 1..{MAX_DEGREE}")

    k = degree
    tris = mesh.triangles
    nt, nv = mesh.num_triangles, mesh.num_vertices
    multi = lattice_multi_indices(k)
    nloc = multi.shape[0]

    # unique edges with canonical (lo, hi) orientation
    raw = np.sort(
        np.concatenate([tris[:, [1, 2]], tris[:, [0, 2]], tris[:, [0, 1]]]), axis=1
    )
    edges, edge_inverse = np.unique(raw, axis=0, return_inverse=True)
    tri_edge = edge_inverse.reshape(3, nt).T  # edge opposite local vertex m
    ne = edges.shape[0]

    n_per_edge = k - 1
    n_per_cell = (k - 1) * (k - 2) // 2
    ndof = nv + ne * n_per_edge + nt * n_per_cell

    cell_to_dof = np.empty((nt, nloc), dtype=np.int64)
    interior_counter = 0
    for j, (i0, i1, i2) in enumerate(multi):
        zeros = [m for m in range(3) if (i0, i1, i2)[m] == 0]
        if len(zeros) == 2:  # vertex node: the nonzero coordinate says which
            m = [m for m in range(3) if (i0, i1, i2)[m] == k][0]
            cell_to_dof[:, j] = tris[:, m]
        elif len(zeros) == 1:  # edge node on the edge opposite vertex `zeros[0]`
            m = zeros[0]
            locs = [0, 1, 2]
            locs.remove(m)
            a, b = tris[:, locs[0]], tris[:, locs[1]]
            wa = (i0, i1, i2)[locs[0]]
            wb = (i0, i1, i2)[locs[1]]
            e = tri_edge[:, m]
            # step index counted from the smaller-id endpoint
            hi_weight = np.where(edges[e, 1] == b, wb, wa)
            cell_to_dof[:, j] = nv + e * n_per_edge + (hi_weight - 1)
        else:  # cell-interior node
            cell_to_dof[:, j] = nv + ne * n_per_edge + np.arange(nt) * n_per_cell + interior_counter
            interior_counter += 1

    # node coordinates: barycentric combination of triangle vertices
    tri_coords = mesh.vertices[tris]  # (nt, 3, 2)
    local_coords = np.einsum("lb,tbx->tlx", multi / k, tri_coords)
    dof_coords = np.empty((ndof, 2))
    dof_coords[cell_to_dof.ravel()] = local_coords.reshape(-1, 2)

    # renumber lexicographically by (y, x)
    order = np.lexsort((dof_coords[:, 0], dof_coords[:, 1]))
    rank = np.empty(ndof, dtype=np.int64)
    rank[order] = np.arange(ndof)
    dof_coords = dof_coords[order]
    cell_to_dof = rank[cell_to_dof]

    x, y = dof_coords[:, 0], dof_coords[:, 1]
    on_boundary = (
        (np.abs(x) <= BOUNDARY_TOL)
        | (np.abs(x - 1.0) <= BOUNDARY_TOL)
        | (np.abs(y) <= BOUNDARY_TOL)
        | (np.abs(y - 1.0) <= BOUNDARY_TOL)
    )
    interior_dofs = np.flatnonzero(~on_boundary)
    full_to_interior = np.full(ndof, -1, dtype=np.int64)
    full_to_interior[interior_dofs] = np.arange(interior_dofs.size)

    return FeSpace(
        mesh=mesh,
        degree=degree,
        dof_coords=dof_coords,
        cell_to_dof=cell_to_dof,
        interior_dofs=interior_dofs,
        _full_to_interior=full_to_interior,
    )


@dataclass(frozen=True)
class CoefficientField:
    """Variable coefficients of the stiffness and mass forms.

    `matrix_coeff(x, y)` must return the 2x2 symmetric positive matrix
    field evaluated at 1-D coordinate arrays: shape (2, 2) for a constant
    field or (2, 2, npts) otherwise.  `scalar_coeff(x, y)` returns the
    positive density: a scalar or an array of shape (npts,).
    """

    matrix_coeff: Callable[[np.ndarray, np.ndarray], np.ndarray]
    scalar_coeff: Callable[[np.ndarray, np.ndarray], np.ndarray]


def unit_coefficients() -> CoefficientField:
    """Coefficients of the plain Laplace problem: identity matrix, unit density."""
    return CoefficientField(
        matrix_coeff=lambda x, y: np.eye(2),
        scalar_coeff=lambda x, y: np.ones_like(x),
    )


class CoefficientError(ValueError):
    """A coefficient failed the positivity check at a quadrature point."""


def _eval_matrix_coeff(c: CoefficientField, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    m = np.asarray(c.matrix_coeff(x, y), dtype=float)
    if m.shape == (2, 2):
        m = np.broadcast_to(m[:, :, None], (2, 2, x.size))
    if m.shape != (2, 2, x.size):
        raise ValueError(f"matrix_coeff returned shape {m.shape}, expected (2,2) or (2,2,{x.size})")
    m = np.moveaxis(m, -1, 0)  # (npts, 2, 2)
    if not np.allclose(m[:, 0, 1], m[:, 1, 0], rtol=0, atol=1e-12):
        raise CoefficientError("matrix coefficient is not symmetric")
    det = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
    if np.any(m[:, 0, 0] <= 0) or np.any(det <= 0):
        raise CoefficientError("matrix coefficient is not positive definite at a quadrature point")
    return m


def _eval_scalar_coeff(c: CoefficientField, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    r = np.asarray(c.scalar_coeff(x, y), dtype=float)
    r = np.broadcast_to(r, x.shape)
    if np.any(r <= 0):
        raise CoefficientError("scalar coefficient is not positive at a quadrature point")
    return r


@dataclass(frozen=True)
class AssembledForms:
    """Sparse SPD stiffness (A) and mass (B) matrices over interior DOFs."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    dof_count: int


def _exact_symmetrize(M: sp.spmatrix) -> sp.csr_matrix:
    S = (M + M.T) * 0.5
    return sp.csr_matrix(S)


def assemble_forms_full(
    space: FeSpace, coeffs: CoefficientField, quad_degree: int | None = None
) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Assemble stiffness and mass over ALL nodes (no Dirichlet elimination)."""
    k = space.degree
    if quad_degree is None:
        quad_degree = 2 * k
    bary, w = triangle_rule(quad_degree)

    mesh = space.mesh
    tri_coords = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    d1 = tri_coords[:, 1] - tri_coords[:, 0]
    d2 = tri_coords[:, 2] - tri_coords[:, 0]
    detJ = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]  # = 2 * area, positive
    inv_jt = np.empty((mesh.num_triangles, 2, 2))
    inv_jt[:, 0, 0] = d2[:, 1] / detJ
    inv_jt[:, 0, 1] = -d1[:, 1] / detJ
    inv_jt[:, 1, 0] = -d2[:, 0] / detJ
    inv_jt[:, 1, 1] = d1[:, 0] / detJ

    points = np.einsum("qb,tbx->tqx", bary, tri_coords)
    px = points[..., 0].ravel()
    py = points[..., 1].ravel()
    amat = _eval_matrix_coeff(coeffs, px, py).reshape(mesh.num_triangles, len(w), 2, 2)
    rho = _eval_scalar_coeff(coeffs, px, py).reshape(mesh.num_triangles, len(w))

    nhat = basis_values(k, bary)       # (q, nloc)
    ghat = basis_gradients(k, bary)    # (q, nloc, 2)
    grads = np.einsum("txy,qiy->tqix", inv_jt, ghat)

    stiff = np.einsum("q,t,tqix,tqxz,tqjz->tij", w, detJ * 0.5, grads, amat, grads, optimize=True)
    mass = np.einsum("q,t,tq,qi,qj->tij", w, detJ * 0.5, rho, nhat, nhat, optimize=True)
    stiff = 0.5 * (stiff + stiff.transpose(0, 2, 1))
    mass = 0.5 * (mass + mass.transpose(0, 2, 1))

    nloc = nhat.shape[1]
    rows = np.repeat(space.cell_to_dof, nloc, axis=1).ravel()
    cols = np.tile(space.cell_to_dof, (1, nloc)).ravel()
    shape = (space.ndof_total, space.ndof_total)
    A = sp.coo_matrix((stiff.ravel(), (rows, cols)), shape=shape).tocsr()
    B = sp.coo_matrix((mass.ravel(), (rows, cols)), shape=shape).tocsr()
    return _exact_symmetrize(A), _exact_symmetrize(B)


def assemble_forms(
    space: FeSpace, coeffs: CoefficientField, quad_degree: int | None = None
) -> AssembledForms:
    """Assemble the interior-DOF stiffness and mass matrices.

    A single symmetric triangle rule exact for degree >= 2k is used for
    both forms; boundary rows/columns are deleted, preserving the exact
    SPD structure.
    """
    A_full, B_full = assemble_forms_full(space, coeffs, quad_degree)
    idx = space.interior_dofs
    A = A_full[idx][:, idx].tocsr()
    B = B_full[idx][:, idx].tocsr()
    return AssembledForms(A=A, B=B, dof_count=idx.size)


def interpolate_nodal(space: FeSpace, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """Vector of f evaluated at the interior node coordinates."""
    pts = space.dof_coords[space.interior_dofs]
    vals = np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float)
    return np.broadcast_to(vals, (pts.shape[0],)).copy()


# ---------------------------------------------------------------------------
# prolongation between nested spaces
# ---------------------------------------------------------------------------

def _locate_points(mesh: TriMesh, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Containing triangle and barycentric coordinates for unit-square points.

    Relies on the canonical split-square structure shared by all meshes in
    this family: the grid cell follows from the coordinates, and the cell
    half from the position relative to the lower-left/upper-right diagonal.
    """
    n = mesh.grid_n
    centroid = mesh.vertices[mesh.triangles].mean(axis=1)
    cix = np.clip((centroid[:, 0] * n).astype(np.int64), 0, n - 1)
    ciy = np.clip((centroid[:, 1] * n).astype(np.int64), 0, n - 1)
    cupper = (centroid[:, 1] * n - ciy) > (centroid[:, 0] * n - cix)
    lut = np.full((n, n, 2), -1, dtype=np.int64)
    lut[ciy, cix, cupper.astype(int)] = np.arange(mesh.num_triangles)
    if np.any(lut < 0):
        raise ValueError("mesh does not have the canonical split-square structure")

    ix = np.clip((points[:, 0] * n).astype(np.int64), 0, n - 1)
    iy = np.clip((points[:, 1] * n).astype(np.int64), 0, n - 1)
    upper = (points[:, 1] * n - iy) > (points[:, 0] * n - ix)
    tri = lut[iy, ix, upper.astype(int)]

    p = mesh.vertices[mesh.triangles[tri]]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    rhs = points - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    lam1 = (rhs[:, 0] * d2[:, 1] - rhs[:, 1] * d2[:, 0]) / det
    lam2 = (d1[:, 0] * rhs[:, 1] - d1[:, 1] * rhs[:, 0]) / det
    bary = np.column_stack([1.0 - lam1 - lam2, lam1, lam2])
    return tri, bary


def prolongation(coarse: FeSpace, fine: FeSpace) -> sp.csr_matrix:
    """Interior-DOF matrix P with (P c) the fine nodal values of the coarse function c.

    Accepts nested pairs only: the fine grid parameter must be an integer
    multiple of the coarse one and the fine degree at least the coarse
    degree (this covers raising the degree on one mesh, regular mesh
    refinement at fixed degree, and their combination).
    """
    ratio, rem = divmod(fine.mesh.grid_n, coarse.mesh.grid_n)
    if rem != 0 or ratio < 1 or fine.degree < coarse.degree:
        raise ValueError(
            "spaces are not nested: need fine grid a multiple of the coarse grid "
            f"and fine degree >= coarse degree (got grids {coarse.mesh.grid_n}->"
            f"{fine.mesh.grid_n}, degrees {coarse.degree}->{fine.degree})"
        )

    fine_pts = fine.dof_coords[fine.interior_dofs]
    tri, bary = _locate_points(coarse.mesh, fine_pts)
    vals = basis_values(coarse.degree, bary)  # (npts, nloc_c)
    nloc = vals.shape[1]

    rows = np.repeat(np.arange(fine_pts.shape[0]), nloc)
    cols_full = coarse.cell_to_dof[tri].ravel()
    cols = coarse.interior_index(cols_full)
    data = vals.ravel().copy()
    data[np.abs(data) < 1e-14] = 0.0
    keep = cols >= 0
    P = sp.coo_matrix(
        (data[keep], (rows[keep], cols[keep])),
        shape=(fine.num_interior, coarse.num_interior),
    ).tocsr()
    P.eliminate_zeros()
    return P


def write_matrix_market(M: sp.spmatrix, path) -> None:
    """Export a sparse symmetric matrix in Matrix Market coordinate format."""
    scipy.io.mmwrite(path, sp.coo_matrix(M), symmetry="symmetric", precision=17)
