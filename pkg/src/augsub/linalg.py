"""Sparse SPD solves, dense symmetric-definite eigensolves, Gram projections.

The dense generalized eigensolver is the workhorse of the augmented
Rayleigh-Ritz step: it must survive a nearly rank-deficient metric matrix
(the augmenting vectors drift into the coarse space as the iteration
converges), so near-dependent directions are dropped explicitly instead of
failing inside a Cholesky factorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class NotSpdError(RuntimeError):
    """The matrix is not symmetric positive definite (breakdown, bad pivot, or
    non-positive curvature)."""


class ConvergenceError(RuntimeError):
    """An iterative solve stopped before reaching the requested tolerance."""

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class DegenerateBasisError(RuntimeError):
    """The projected metric matrix has no direction above the drop tolerance."""


DIRECT_SOLVE_LIMIT = 200_000


class SpdSolver:
    """Solver for a fixed sparse SPD matrix behind one contract.

    Uses a direct factorization up to ``DIRECT_SOLVE_LIMIT`` unknowns and a
    Jacobi-preconditioned conjugate gradient beyond that; ``method`` forces
    either path.  Every solve satisfies ||Ax-b|| <= tol * ||b||.
    """

    def __init__(self, A: sp.spmatrix, tol: float = 1e-12, method: str = "auto"):
        if method not in ("auto", "direct", "cg"):
            raise ValueError(f"unknown method {method!r}")
        A = sp.csr_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.A = A
        self.tol = tol
        self.n = A.shape[0]
        if method == "auto":
            method = "direct" if self.n <= DIRECT_SOLVE_LIMIT else "cg"
        self.method = method

        if method == "direct":
            try:
                self._lu = spla.splu(
                    A.tocsc(),
                    permc_spec="MMD_AT_PLUS_A",
                    diag_pivot_thresh=0.0,
                    options=dict(SymmetricMode=True),
                )
            except RuntimeError as exc:  # exactly singular
                raise NotSpdError(f"factorization breakdown: {exc}") from exc
            if np.any(self._lu.U.diagonal() <= 0):
                raise NotSpdError("non-positive pivot encountered; matrix is not SPD")
        else:
            d = A.diagonal()
            if np.any(d <= 0):
                raise NotSpdError("non-positive diagonal entry; matrix is not SPD")
            self._inv_diag = 1.0 / d

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        norm_b = np.linalg.norm(b)
        if norm_b == 0.0:
            return np.zeros_like(b)
        if self.method == "direct":
            x = self._lu.solve(b)
            # iterative refinement while roundoff leaves a residual and improves
            achieved = np.linalg.norm(b - self.A @ x) / norm_b
            for _ in range(3):
                if achieved <= self.tol:
                    break
                x_new = x + self._lu.solve(b - self.A @ x)
                new_res = np.linalg.norm(b - self.A @ x_new) / norm_b
                if new_res >= achieved:
                    break
                x, achieved = x_new, new_res
            if achieved > self.tol:
                raise ConvergenceError(
                    f"direct solve residual {achieved:.3e} above tolerance {self.tol:.3e}",
                    achieved=float(achieved),
                )
            return x
        return self._solve_cg(b, norm_b)

    def solve_many(self, B: np.ndarray) -> np.ndarray:
        """Solve one column at a time; columns are independent."""
        B = np.asarray(B, dtype=float)
        return np.column_stack([self.solve(B[:, j]) for j in range(B.shape[1])])

    def _solve_cg(self, b: np.ndarray, norm_b: float) -> np.ndarray:
        x = np.zeros_like(b)
        r = b.copy()
        z = self._inv_diag * r
        p = z.copy()
        rz = r @ z
        max_iter = max(1000, 10 * self.n)
        for _ in range(max_iter):
            Ap = self.A @ p
            curvature = p @ Ap
            if curvature <= 0:
                raise NotSpdError("non-positive curvature encountered; matrix is not SPD")
            alpha = rz / curvature
            x += alpha * p
            r -= alpha * Ap
            if np.linalg.norm(r) <= self.tol * norm_b:
                return x
            z = self._inv_diag * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise ConvergenceError(
            f"cg stalled at relative residual {np.linalg.norm(r) / norm_b:.3e}",
            achieved=float(np.linalg.norm(r) / norm_b),
        )


def solve_spd(A: sp.spmatrix, b: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """One-shot SPD solve with relative residual below `tol`."""
    return SpdSolver(A, tol=tol).solve(b)


@dataclass(frozen=True)
class DenseEigResult:
    """Eigenpairs of a dense symmetric-definite pencil, ascending, metric-orthonormal."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    retained_dimension: int


def _fix_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def dense_gen_eig(
    A: np.ndarray, B: np.ndarray, drop_tol: float = 1e-12, k: int | None = None
) -> DenseEigResult:
    """Solve A v = lambda B v for symmetric A and symmetric PSD B.

    Directions of B with eigenvalue below ``drop_tol`` times its largest
    eigenvalue are discarded before the solve; the returned vectors are
    B-orthonormal within the retained subspace and each column's
    largest-magnitude entry is positive.  With ``k`` given, only the k
    smallest pairs are returned (a faster LAPACK path is used when B is
    safely positive definite).

    Raises DegenerateBasisError when no direction of B survives the drop.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    m = A.shape[0]
    if A.shape != (m, m) or B.shape != (m, m):
        raise ValueError("matrices must be square and of equal size")
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)

    if k is not None and 0 < k < m:
        fast = _try_subset_path(A, B, k)
        if fast is not None:
            return fast

    s, U = sla.eigh(B)
    smax = s[-1] if m else 0.0
    if smax <= 0:
        raise DegenerateBasisError("metric matrix has no positive direction")
    keep = s > drop_tol * smax
    retained = int(np.count_nonzero(keep))
    if retained == 0:
        raise DegenerateBasisError("metric matrix fully degenerate at the drop tolerance")
    W = U[:, keep] / np.sqrt(s[keep])
    C = W.T @ A @ W
    C = 0.5 * (C + C.T)
    w, Y = sla.eigh(C)
    V = W @ Y
    if k is not None:
        w, V = w[:k], V[:, :k]
    return DenseEigResult(eigenvalues=w, eigenvectors=_fix_signs(V), retained_dimension=retained)


def _try_subset_path(A: np.ndarray, B: np.ndarray, k: int) -> DenseEigResult | None:
    """Cholesky-based subset solve; None when B is not comfortably definite."""
    d = B.diagonal()
    if np.any(d <= 0):
        return None
    try:
        w, V = sla.eigh(A, B, subset_by_index=[0, k - 1])
    except (sla.LinAlgError, np.linalg.LinAlgError):
        return None
    # reject if near-singularity of B degraded the pairs
    scale = max(np.abs(A).max(), 1e-300)
    resid = np.abs(A @ V - B @ V * w).max()
    if not np.isfinite(resid) or resid > 1e-10 * scale:
        return None
    return DenseEigResult(eigenvalues=w, eigenvectors=_fix_signs(V), retained_dimension=A.shape[0])


def project_forms(Z, A: sp.spmatrix, B: sp.spmatrix) -> tuple[np.ndarray, np.ndarray]:
    """Restrict the forms to the span of the columns of Z.

    Returns (Z^T A Z, Z^T B Z) as dense symmetric arrays; Z may be sparse
    or dense with one row per fine interior DOF.
    """
    if Z.shape[0] != A.shape[0]:
        raise ValueError(f"basis has {Z.shape[0]} rows, forms have dimension {A.shape[0]}")

    def gram(M):
        G = Z.T @ (M @ Z)
        if sp.issparse(G):
            G = G.toarray()
        G = np.asarray(G, dtype=float)
        return 0.5 * (G + G.T)

    return gram(A), gram(B)


def orthonormalize_a(vectors, A: sp.spmatrix, drop_tol: float = 1e-10) -> list[np.ndarray]:
    """Gram-Schmidt in the A-inner product, dropping near-dependent vectors.

    A vector is dropped when its residual A-norm after projection falls
    below ``drop_tol`` times its original A-norm; the span of the retained
    vectors matches the input span.  Two projection passes keep the result
    orthonormal to ~1e-14 even for ill-conditioned inputs.
    """
    basis: list[np.ndarray] = []
    images: list[np.ndarray] = []  # A @ q cached per kept vector
    for v in vectors:
        v = np.array(v, dtype=float)
        norm0 = np.sqrt(v @ (A @ v))
        if norm0 <= 0:
            continue
        for _ in range(2):
            for q, Aq in zip(basis, images):
                v -= (Aq @ v) * q
        Av = A @ v
        norm = np.sqrt(max(v @ Av, 0.0))
        if norm > drop_tol * norm0:
            basis.append(v / norm)
            images.append(Av / norm)
    return basis
