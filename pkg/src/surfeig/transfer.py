"""Geometric prolongation and restriction between consecutive levels.

Coarse vertices keep their nodal value; a projected midpoint receives the
average of the values at the two endpoints of its parent edge.  Restriction
is the plain transpose in nodal coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import as_csr
from .mesh import TriMesh


class HierarchyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Prolongation:
    matrix: sp.csr_matrix
    coarse_level: int
    fine_level: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def prolong(self, coarse_vector: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(coarse_vector, dtype=float)

    def restrict(self, fine_vector: np.ndarray) -> np.ndarray:
        return restrict(self, fine_vector)


def build_prolongation(coarse: TriMesh, fine: TriMesh) -> Prolongation:
    if fine.level != coarse.level + 1:
        raise HierarchyError(f"levels {coarse.level} -> {fine.level} are not consecutive")
    if fine.num_inherited != coarse.num_vertices or fine.parent_edges.shape[0] == 0:
        raise HierarchyError("fine mesh carries no parent-edge map for this coarse mesh")
    nc, nf = coarse.num_vertices, fine.num_vertices
    new = np.arange(nc, nf)
    rows = np.concatenate([np.arange(nc), new, new])
    cols = np.concatenate([np.arange(nc), fine.parent_edges[:, 0], fine.parent_edges[:, 1]])
    vals = np.concatenate([np.ones(nc), np.full(2 * len(new), 0.5)])
    P = as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(nf, nc)))
    return Prolongation(P, coarse.level, fine.level)


def restrict(p: Prolongation, fine_vector: np.ndarray) -> np.ndarray:
    fine_vector = np.asarray(fine_vector, dtype=float)
    if fine_vector.shape[0] != p.matrix.shape[0]:
        raise ValueError(f"expected a fine vector of length {p.matrix.shape[0]}, "
                         f"got {fine_vector.shape[0]}")
    return p.matrix.T @ fine_vector


def compose_prolongations(hierarchy: list[Prolongation], from_level: int,
                          to_level: int) -> sp.csr_matrix:
    """Product ``P_to ... P_{from+1}`` mapping level ``from_level`` to ``to_level``.

    ``from_level == to_level`` gives the identity.
    """
    if to_level < from_level:
        raise HierarchyError("to_level must be >= from_level")
    by_fine = {p.fine_level: p for p in hierarchy}
    if from_level == to_level:
        n = None
        if from_level + 1 in by_fine:
            n = by_fine[from_level + 1].shape[1]
        elif from_level in by_fine:
            n = by_fine[from_level].shape[0]
        if n is None:
            raise HierarchyError(f"level {from_level} not in hierarchy")
        return sp.identity(n, format="csr")
    result = None
    for level in range(from_level + 1, to_level + 1):
        p = by_fine.get(level)
        if p is None or p.coarse_level != level - 1:
            raise HierarchyError(f"missing prolongation {level - 1} -> {level}")
        result = p.matrix if result is None else p.matrix @ result
    return as_csr(result)
