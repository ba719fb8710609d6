"""Sparse kernels, smoothers and small dense eigensolvers.

Sparse matrices are :class:`scipy.sparse.csr_matrix` in canonical form
(sorted column indices, no duplicates, no stored zeros).  A
:class:`ShiftedOperator` stands for ``A - shift * M`` and is accepted by every
solver and smoother in place of a plain matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(np.linalg.LinAlgError):
    """A matrix is singular to working precision.

    ``cond`` holds the estimated 1-norm condition number (``inf`` when the
    factorization broke down outright).
    """

    def __init__(self, message: str, cond: float = np.inf):
        self.cond = cond
        super().__init__(message)


class ZeroPivotError(np.linalg.LinAlgError):
    """A smoother met a zero diagonal entry or an all-zero row."""

    def __init__(self, message: str, index: int):
        self.index = index
        super().__init__(message)


class RankDeficiencyWarning(UserWarning):
    pass


def as_csr(A) -> sp.csr_matrix:
    """Canonical CSR copy of ``A``: sorted indices, summed duplicates, no zeros."""
    A = sp.csr_matrix(A, dtype=float, copy=True)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


@dataclass(eq=False)
class ShiftedOperator:
    """Lazy ``A - shift * M``."""

    A: sp.csr_matrix
    M: sp.csr_matrix
    shift: float = 0.0
    _matrix: sp.csr_matrix | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.A.shape != self.M.shape:
            raise ValueError(f"shape mismatch: A {self.A.shape} vs M {self.M.shape}")
        self.shift = float(self.shift)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def dot(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x - self.shift * (self.M @ x)

    __matmul__ = dot

    def tocsr(self) -> sp.csr_matrix:
        if self._matrix is None:
            if self.shift == 0.0:
                self._matrix = as_csr(self.A)
            else:
                self._matrix = as_csr(self.A - self.shift * self.M)
        return self._matrix


def _materialize(op) -> sp.csr_matrix:
    if isinstance(op, ShiftedOperator):
        return op.tocsr()
    if sp.issparse(op):
        A = op.tocsr()
        if not A.has_sorted_indices or not A.has_canonical_format:
            A = as_csr(A)
        return A
    return as_csr(np.atleast_2d(np.asarray(op, dtype=float)))


def spmv(A, x: np.ndarray) -> np.ndarray:
    """``A @ x`` with a dimension check."""
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    if isinstance(A, ShiftedOperator):
        return A.dot(x)
    return np.asarray(A @ x)


# --- stationary smoothers -------------------------------------------------

@numba.njit(cache=True)
def _gs_sweep(indptr, indices, data, diag, b, x, forward):
    n = b.shape[0]
    for k in range(n):
        i = k if forward else n - 1 - k
        s = b[i]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i:
                s -= data[p] * x[j]
        x[i] = s / diag[i]


@numba.njit(cache=True)
def _kaczmarz_sweep(indptr, indices, data, row_norm2, b, x):
    n = b.shape[0]
    for i in range(n):
        r = b[i]
        for p in range(indptr[i], indptr[i + 1]):
            r -= data[p] * x[indices[p]]
        r /= row_norm2[i]
        for p in range(indptr[i], indptr[i + 1]):
            x[indices[p]] += r * data[p]


def _check_system(K, b, x0):
    if K.shape[0] != K.shape[1]:
        raise ValueError("expected a square system")
    b = np.ascontiguousarray(b, dtype=float)
    x = np.array(x0, dtype=float, copy=True)
    if b.shape != (K.shape[0],) or x.shape != (K.shape[0],):
        raise ValueError(f"dimension mismatch: {K.shape}, b {b.shape}, x0 {x.shape}")
    return b, x


def gauss_seidel(op, b, x0, sweeps: int = 1, symmetric: bool = True) -> np.ndarray:
    """Gauss-Seidel sweeps on ``op x = b`` starting from ``x0``.

    With ``symmetric=True`` each sweep is a forward pass followed by a
    backward pass.
    """
    if sweeps < 0:
        raise ValueError("sweeps must be >= 0")
    K = _materialize(op)
    b, x = _check_system(K, b, x0)
    if sweeps == 0:
        return x
    diag = K.diagonal()
    zero = np.flatnonzero(diag == 0.0)
    if zero.size:
        raise ZeroPivotError(f"zero diagonal entry at row {zero[0]}", int(zero[0]))
    for _ in range(sweeps):
        _gs_sweep(K.indptr, K.indices, K.data, diag, b, x, True)
        if symmetric:
            _gs_sweep(K.indptr, K.indices, K.data, diag, b, x, False)
    return x


def kaczmarz(op, b, x0, sweeps: int = 5) -> np.ndarray:
    """Cyclic Kaczmarz row projections, rows visited in ascending order."""
    if sweeps < 0:
        raise ValueError("sweeps must be >= 0")
    K = _materialize(op)
    b, x = _check_system(K, b, x0)
    if sweeps == 0:
        return x
    row_norm2 = np.asarray(K.multiply(K).sum(axis=1)).ravel()
    zero = np.flatnonzero(row_norm2 == 0.0)
    if zero.size:
        raise ZeroPivotError(f"zero row {zero[0]}", int(zero[0]))
    for _ in range(sweeps):
        _kaczmarz_sweep(K.indptr, K.indices, K.data, row_norm2, b, x)
    return x


# --- direct solves ---------------------------------------------------------

class DirectSolver:
    """Sparse LU of ``op`` (row/column pivoting, valid for indefinite systems).

    Parameters
    ----------
    op : sparse matrix or ShiftedOperator
    nullspace : optional vector spanning a known exact kernel of ``op``
        (e.g. constants for a closed-surface stiffness matrix).  The system
        is then solved on the complement: the right side is projected onto
        ``range(op)`` and the first unknown is pinned to zero.
    rcond_tol : reciprocal 1-norm condition number below which the matrix
        is declared singular.
    """

    def __init__(self, op, nullspace: np.ndarray | None = None,
                 rcond_tol: float = 1e-12, check_condition: bool = True):
        K = _materialize(op)
        if K.shape[0] != K.shape[1]:
            raise ValueError("expected a square matrix")
        self.shape = K.shape
        self.nullspace = None
        if nullspace is not None:
            k = np.asarray(nullspace, dtype=float)
            self.nullspace = k / np.linalg.norm(k)
            self._pin = int(np.argmax(np.abs(k)))
            keep = np.ones(K.shape[0], dtype=bool)
            keep[self._pin] = False
            self._keep = keep
            K = K[keep][:, keep]
        try:
            self._lu = spla.splu(K.tocsc())
        except RuntimeError as exc:
            raise SingularMatrixError(f"factorization failed: {exc}") from None
        self.cond = np.nan
        if check_condition:
            self.cond = self._condition_estimate(K)
            if not np.isfinite(self.cond) or 1.0 / self.cond < rcond_tol:
                raise SingularMatrixError(
                    f"matrix is singular to working precision (cond1 ~ {self.cond:.3e})",
                    self.cond)

    def _condition_estimate(self, K) -> float:
        n = K.shape[0]
        if n <= 2:
            return float(np.linalg.cond(K.toarray(), 1))
        inv = spla.LinearOperator(
            (n, n), matvec=self._lu.solve, dtype=float,
            rmatvec=lambda y: self._lu.solve(y, trans="T"))
        with np.errstate(all="ignore"):
            inv_norm = spla.onenormest(inv)
        return float(spla.norm(K, 1) * inv_norm)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.ndim not in (1, 2) or b.shape[0] != self.shape[0]:
            raise ValueError(f"dimension mismatch: {self.shape} vs b {b.shape}")
        if self.nullspace is None:
            x = self._lu.solve(b)
        else:
            k = self.nullspace
            b = b - np.multiply.outer(k, k @ b)
            x = np.zeros_like(b)
            x[self._keep] = self._lu.solve(b[self._keep])
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("non-finite solution from direct solve")
        return x


def solve_direct(op, b: np.ndarray, nullspace: np.ndarray | None = None) -> np.ndarray:
    """One-shot :class:`DirectSolver` solve."""
    return DirectSolver(op, nullspace=nullspace).solve(b)


# --- dense eigenproblems and inner products ---------------------------------

def dense_generalized_eig(A, M) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of the symmetric-definite pencil ``A x = lam M x``.

    Uses the Cholesky reduction ``M = L L^T``, ``L^{-1} A L^{-T} y = lam y``,
    ``x = L^{-T} y``.  Eigenvalues ascend; eigenvectors are M-orthonormal.
    """
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    if A.shape != M.shape or A.shape[0] != A.shape[1]:
        raise ValueError(f"shape mismatch: A {A.shape}, M {M.shape}")
    A = 0.5 * (A + A.T)
    M = 0.5 * (M + M.T)
    try:
        L = scipy.linalg.cholesky(M, lower=True)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("mass matrix is not positive definite") from None
    C = scipy.linalg.solve_triangular(L, A, lower=True)
    C = scipy.linalg.solve_triangular(L, C.T, lower=True)
    values, Y = scipy.linalg.eigh(0.5 * (C + C.T))
    X = scipy.linalg.solve_triangular(L.T, Y, lower=False)
    return values, X


def m_inner(M, u: np.ndarray, v: np.ndarray) -> float:
    return float(u @ (M @ v))


def b_orthonormalize(vectors: np.ndarray, M, drop_tol: float = 1e-10,
                     against: np.ndarray | None = None) -> tuple[np.ndarray, list[int]]:
    """Modified Gram-Schmidt in the ``M`` inner product.

    Parameters
    ----------
    vectors : (n, k) array, columns processed left to right
    M : SPD matrix defining the inner product
    drop_tol : a column whose remaining M-norm falls below ``drop_tol``
        times its original M-norm is dropped
    against : optional (n, p) M-orthonormal columns to project out first

    Returns
    -------
    Q : (n, k') M-orthonormal columns, ``k' = k - len(dropped)``
    dropped : indices of the dropped input columns
    """
    V = np.array(vectors, dtype=float, copy=True)
    if V.ndim == 1:
        V = V[:, None]
    basis = [] if against is None else [c for c in np.asarray(against).T]
    basis_M = [M @ c for c in basis]
    n_fixed = len(basis)
    dropped = []
    for j in range(V.shape[1]):
        v = V[:, j]
        norm0 = np.sqrt(max(m_inner(M, v, v), 0.0))
        if norm0 == 0.0:
            dropped.append(j)
            continue
        # two passes of MGS keep orthogonality at the 1e-15 level
        for _ in range(2):
            for q, Mq in zip(basis, basis_M):
                v = v - (Mq @ v) * q
        Mv = M @ v
        norm = np.sqrt(max(float(v @ Mv), 0.0))
        if norm <= drop_tol * norm0:
            dropped.append(j)
            continue
        basis.append(v / norm)
        basis_M.append(Mv / norm)
    Q = np.array(basis[n_fixed:]).T if len(basis) > n_fixed else np.zeros((V.shape[0], 0))
    return Q, dropped


def rayleigh_quotient(A, M, v: np.ndarray, shift: float = 0.0) -> float:
    """``v^T A v / v^T M v + shift``."""
    v = np.asarray(v, dtype=float)
    denom = float(v @ (M @ v))
    if denom == 0.0 or not np.any(v):
        raise ValueError("Rayleigh quotient of the zero vector")
    return float(v @ spmv(A, v)) / denom + shift


def write_matrix_market(path: str | Path, A, symmetric: bool | None = None) -> None:
    """Coordinate Matrix Market dump (1-based indices)."""
    A = _materialize(A)
    if symmetric is None:
        symmetric = abs(A - A.T).max() == 0.0 if A.nnz else True
    scipy.io.mmwrite(str(path), A, symmetry="symmetric" if symmetric else "general",
                     precision=17)


def read_matrix_market(path: str | Path) -> sp.csr_matrix:
    return as_csr(scipy.io.mmread(str(path)))
