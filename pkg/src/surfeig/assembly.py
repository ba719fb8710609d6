"""Piecewise-linear surface FEM stiffness and mass matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import as_csr
from .mesh import TriMesh

DEGENERATE_TOL = 1e-14

# parameter-space gradients of the three hat functions on the reference triangle
_D = np.array([[-1.0, 1.0, 0.0],
               [-1.0, 0.0, 1.0]])


class DegenerateTriangleError(ValueError):
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class AssembledForms:
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix

    @property
    def dof_count(self) -> int:
        return self.stiffness.shape[0]


def _element_geometry(p: np.ndarray):
    """Metric tensors and areas for a stack of triangles ``p`` of shape (m, 3, 3)."""
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    G = np.empty((p.shape[0], 2, 2))
    G[:, 0, 0] = np.einsum("ij,ij->i", e1, e1)
    G[:, 1, 1] = np.einsum("ij,ij->i", e2, e2)
    G[:, 0, 1] = G[:, 1, 0] = np.einsum("ij,ij->i", e1, e2)
    det = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] ** 2
    area = 0.5 * np.sqrt(np.maximum(det, 0.0))
    e3 = p[:, 2] - p[:, 1]
    diam2 = np.maximum(np.maximum(G[:, 0, 0], G[:, 1, 1]),
                       np.einsum("ij,ij->i", e3, e3))
    bad = np.flatnonzero(area <= DEGENERATE_TOL * diam2)
    if bad.size:
        raise DegenerateTriangleError(
            f"degenerate triangle {bad[0]} (area {area[bad[0]]:.3e})", int(bad[0]))
    return G, det, area


def _stiffness_blocks(p: np.ndarray) -> np.ndarray:
    G, det, area = _element_geometry(p)
    Ginv = np.empty_like(G)
    Ginv[:, 0, 0] = G[:, 1, 1] / det
    Ginv[:, 1, 1] = G[:, 0, 0] / det
    Ginv[:, 0, 1] = Ginv[:, 1, 0] = -G[:, 0, 1] / det
    return area[:, None, None] * np.einsum("ai,mab,bj->mij", _D, Ginv, _D)


def _mass_blocks(p: np.ndarray) -> np.ndarray:
    _, _, area = _element_geometry(p)
    pattern = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return area[:, None, None] * pattern


def element_stiffness(triangle) -> np.ndarray:
    """3x3 matrix of ``int_T grad phi_i . grad phi_j`` for a flat triangle in R^3."""
    return _stiffness_blocks(np.asarray(triangle, dtype=float)[None])[0]


def element_mass(triangle) -> np.ndarray:
    """Consistent 3x3 mass matrix: area/6 on the diagonal, area/12 off it."""
    return _mass_blocks(np.asarray(triangle, dtype=float)[None])[0]


def _scatter(triangles: np.ndarray, blocks: np.ndarray, n: int) -> sp.csr_matrix:
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    return as_csr(sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)))


def assemble(mesh: TriMesh) -> AssembledForms:
    """Global stiffness ``A`` and consistent mass ``M`` of ``mesh``."""
    p = mesh.vertices[mesh.triangles]
    n = mesh.num_vertices
    A = _scatter(mesh.triangles, _stiffness_blocks(p), n)
    M = _scatter(mesh.triangles, _mass_blocks(p), n)
    # exact symmetry; scatter-add of symmetric blocks is symmetric up to roundoff
    return AssembledForms(as_csr(0.5 * (A + A.T)), as_csr(0.5 * (M + M.T)))


def cotangent_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    """Stiffness matrix from the cotangent weights ``-(cot a + cot b) / 2``."""
    p = mesh.vertices[mesh.triangles]
    _element_geometry(p)
    n = mesh.num_vertices
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        u = p[:, i] - p[:, k]
        v = p[:, j] - p[:, k]
        cot = np.einsum("ij,ij->i", u, v) / np.linalg.norm(np.cross(u, v), axis=1)
        rows += [mesh.triangles[:, i], mesh.triangles[:, j]]
        cols += [mesh.triangles[:, j], mesh.triangles[:, i]]
        vals += [-0.5 * cot, -0.5 * cot]
    off = sp.coo_matrix((np.concatenate(vals),
                         (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n, n)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return as_csr(off + sp.diags(diag))
