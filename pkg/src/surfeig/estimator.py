"""Residual a posteriori error estimator for P1 surface eigenfunctions.

Per triangle ``T`` the squared indicator is

    h_T^2 lam^2 ||u||_T^2
    + 1/2 sum_{e in dT} h_e ||[grad u . (n_T x tau_e)]||_e^2
    + (max_vertex bound(x))^2 ||grad u||_T^2,

where ``bound(x) = |(1 - n.n_T) / (n.n_T)| (|x|^2 + 4|x|)`` with ``n`` the
sphere normal at ``x``.  P1 gradients are constant on each triangle, so
every term is evaluated exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assembly import _element_geometry
from .mesh import MeshError, TriMesh, triangle_normals, unique_edges


@dataclass(frozen=True, eq=False)
class EstimatorBreakdown:
    """Squared per-triangle terms; ``eta_T = sqrt(volume + jump + geometric)``."""

    volume: np.ndarray
    jump: np.ndarray
    geometric: np.ndarray

    @property
    def local(self) -> np.ndarray:
        return np.sqrt(self.volume + self.jump + self.geometric)

    @property
    def total(self) -> float:
        return global_estimator(self.local)

    def write_csv(self, path: str | Path) -> None:
        """Delimited-text export, one row per triangle."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["triangle", "volume_sq", "jump_sq", "geometric_sq", "eta_T"])
            for t, row in enumerate(zip(self.volume, self.jump, self.geometric, self.local)):
                w.writerow([t, *(repr(float(x)) for x in row)])


def _sphere_bound(x: np.ndarray, n_T: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(x, axis=-1)
    cos = np.einsum("...j,...j->...", x / r[..., None], n_T)
    if np.any(cos <= 0.0):
        raise MeshError("triangle normal points away from the sphere normal")
    return np.abs((1.0 - cos) / cos) * (r ** 2 + 4.0 * r)


def geometric_bound(triangle) -> float:
    """Largest vertex value of the pointwise bound on the geometric error operator.

    ``triangle`` is a (3, 3) array of vertices on the unit sphere listed
    counter-clockwise seen from outside.
    """
    p = np.asarray(triangle, dtype=float)
    n_T = np.cross(p[1] - p[0], p[2] - p[0])
    n_T /= np.linalg.norm(n_T)
    return float(_sphere_bound(p, n_T).max())


def _gradients(mesh: TriMesh, u: np.ndarray):
    """Constant surface gradient of the P1 function ``u`` on every triangle."""
    p = mesh.vertices[mesh.triangles]
    G, det, area = _element_geometry(p)
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)   # (m, 3, 2)
    ut = u[mesh.triangles]
    d = np.stack([ut[:, 1] - ut[:, 0], ut[:, 2] - ut[:, 0]], axis=1)
    Ginv_d = np.linalg.solve(G, d[..., None])[..., 0]
    return np.einsum("mij,mj->mi", J, Ginv_d), area


def estimator_breakdown(mesh: TriMesh, u: np.ndarray, lam: float) -> EstimatorBreakdown:
    """All three squared terms on every triangle of ``mesh``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.num_vertices,):
        raise ValueError(f"expected {mesh.num_vertices} nodal values, got {u.shape}")
    tri = mesh.triangles
    p = mesh.vertices[tri]
    grad, area = _gradients(mesh, u)
    normals = triangle_normals(mesh.vertices, tri)

    lengths = np.stack([np.linalg.norm(p[:, (k + 2) % 3] - p[:, (k + 1) % 3], axis=1)
                        for k in range(3)], axis=1)
    h_T = lengths.max(axis=1)
    ut = u[tri]
    # exact L2 norm of a linear function: area/12 (sum u_i^2 + (sum u_i)^2)
    l2sq = area / 12.0 * ((ut ** 2).sum(axis=1) + ut.sum(axis=1) ** 2)
    volume = h_T ** 2 * lam ** 2 * l2sq

    edges, tri_edge, counts = unique_edges(tri)
    if np.any(counts != 2):
        raise MeshError("boundary or non-manifold edge in estimator")
    tau = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    h_e = np.linalg.norm(tau, axis=1)
    tau /= h_e[:, None]
    # grad u . (n_T x tau_e) for each (triangle, local edge)
    conormal_flux = np.einsum("mj,mkj->mk", grad,
                              np.cross(normals[:, None, :], tau[tri_edge]))
    flat_edge = tri_edge.ravel()
    total = np.bincount(flat_edge, weights=conormal_flux.ravel(), minlength=len(edges))
    first = np.full(len(edges), np.nan)
    # jump = flux from one side minus flux from the other = 2 * first - total
    order = np.argsort(flat_edge, kind="stable")
    first[flat_edge[order[::2]]] = conormal_flux.ravel()[order[::2]]
    jump_e = 2.0 * first - total
    jump = 0.5 * (h_e[tri_edge] * jump_e[tri_edge] ** 2 * h_e[tri_edge]).sum(axis=1)

    bound = _sphere_bound(p, normals[:, None, :]).max(axis=1)
    grad_sq = area * np.einsum("ij,ij->i", grad, grad)
    geometric = bound ** 2 * grad_sq
    return EstimatorBreakdown(volume, jump, geometric)


def local_estimator(mesh: TriMesh, forms, u: np.ndarray, lam: float, T: int) -> float:
    """Indicator ``eta_T`` of triangle ``T``.

    ``forms`` is accepted for interface symmetry with the solvers; the
    indicator only needs the geometry.
    """
    if not 0 <= T < mesh.num_triangles:
        raise IndexError(f"triangle {T} out of range")
    return float(estimator_breakdown(mesh, u, lam).local[T])


def global_estimator(local) -> float:
    """Root-sum-square of the per-triangle indicators."""
    local = np.asarray(local, dtype=float)
    return float(np.sqrt(np.sum(local ** 2)))
