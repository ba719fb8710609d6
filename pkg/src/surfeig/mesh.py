"""Triangulated closed surfaces approximating the unit sphere.

A :class:`TriMesh` holds one level of a refinement hierarchy.  Refinement
splits every triangle into four through its edge midpoints and pushes each
midpoint back onto the surface with a projector, so successive levels are
*not* nested as piecewise-linear spaces even though the coarse vertex set is
kept as a prefix of the fine one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull

SurfaceProjector = Callable[[np.ndarray], np.ndarray]


class MeshError(ValueError):
    """Raised for meshes violating the closed-manifold invariants."""


class MeshFormatError(MeshError):
    """Raised by :func:`load_mesh` for malformed OFF files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def project_to_sphere(points: np.ndarray) -> np.ndarray:
    """Radial (closest-point) projection onto the unit sphere."""
    points = np.asarray(points, dtype=float)
    norms = np.linalg.norm(points, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot project the origin onto the sphere")
    return points / norms


@dataclass(frozen=True, eq=False)
class TriMesh:
    """One level of a triangulated surface.

    Attributes
    ----------
    vertices : (n, 3) float array
    triangles : (m, 3) int array, outward (counter-clockwise) orientation
    level : int
        Index in the refinement hierarchy, 0 for a generated/loaded mesh.
    parent_edges : (n - n_inherited, 2) int array
        Row ``r`` holds the coarse endpoints ``(i, j)``, ``i < j``, of the edge
        whose projected midpoint became vertex ``n_inherited + r``.  Empty at
        level 0.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    level: int = 0
    parent_edges: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=float)
        triangles = np.array(self.triangles, dtype=np.int64)
        parent_edges = np.array(self.parent_edges, dtype=np.int64).reshape(-1, 2)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (n, 3)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must have shape (m, 3)")
        for arr in (vertices, triangles, parent_edges):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        object.__setattr__(self, "parent_edges", parent_edges)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_inherited(self) -> int:
        """Number of vertices copied from the parent level."""
        return self.num_vertices - self.parent_edges.shape[0]

    def edges(self) -> np.ndarray:
        return unique_edges(self.triangles)[0]

    def euler_characteristic(self) -> int:
        return self.num_vertices - len(self.edges()) + self.num_triangles


@dataclass(frozen=True)
class MeshStats:
    h_max: float
    h_min: float
    total_area: float
    min_quality: float


def unique_edges(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sorted unique edges of a triangle list.

    Returns
    -------
    edges : (E, 2) array with ``edges[:, 0] < edges[:, 1]``, lexicographically sorted
    tri_edge : (m, 3) array; ``tri_edge[t, k]`` is the edge opposite local vertex ``k``
    counts : (E,) number of triangles sharing each edge
    """
    triangles = np.asarray(triangles)
    # local edge k joins vertices (k+1, k+2), i.e. it is opposite vertex k
    half = np.stack([triangles[:, [1, 2]], triangles[:, [2, 0]],
                     triangles[:, [0, 1]]], axis=1).reshape(-1, 2)
    half = np.sort(half, axis=1)
    edges, inverse, counts = np.unique(half, axis=0, return_inverse=True,
                                       return_counts=True)
    return edges, inverse.reshape(-1, 3), counts


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def triangle_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Unit normals following the vertex orientation of each triangle."""
    p = vertices[triangles]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    return cross / np.linalg.norm(cross, axis=1, keepdims=True)


def signed_volume(mesh: TriMesh) -> float:
    p = mesh.vertices[mesh.triangles]
    return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)


def check_mesh(mesh: TriMesh, projector: SurfaceProjector | None = None,
               surface_tol: float = 1e-12) -> None:
    """Raise :class:`MeshError` unless ``mesh`` is a valid closed surface mesh."""
    tri = mesh.triangles
    n = mesh.num_vertices
    if tri.size and (tri.min() < 0 or tri.max() >= n):
        raise MeshError("triangle references a vertex index out of range")
    if np.any((tri[:, 0] == tri[:, 1]) | (tri[:, 1] == tri[:, 2])
              | (tri[:, 0] == tri[:, 2])):
        raise MeshError("triangle with repeated vertex index")
    _, _, counts = unique_edges(tri)
    if np.any(counts != 2):
        raise MeshError("mesh is not a closed 2-manifold: "
                        f"{np.count_nonzero(counts != 2)} edges not shared by exactly two triangles")
    if np.any(triangle_areas(mesh.vertices, tri) <= 0.0):
        raise MeshError("mesh contains zero-area triangles")
    if projector is not None:
        dist = np.linalg.norm(projector(mesh.vertices) - mesh.vertices, axis=1)
        if dist.max() > surface_tol:
            raise MeshError(f"vertex off the surface by {dist.max():.3e}")


def make_octahedron() -> TriMesh:
    """Regular octahedron inscribed in the unit sphere (6 vertices, 8 faces)."""
    vertices = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0],
                         [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float)
    triangles = np.array([[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
                          [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]])
    return TriMesh(vertices, triangles)


def make_icosahedron() -> TriMesh:
    """Regular icosahedron inscribed in the unit sphere (12 vertices, 20 faces)."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    vertices = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
                         [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                         [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]],
                        dtype=float)
    triangles = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10],
                          [0, 10, 11], [1, 5, 9], [5, 11, 4], [11, 10, 2],
                          [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2],
                          [3, 2, 6], [3, 6, 8], [3, 8, 9], [4, 9, 5],
                          [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    return TriMesh(project_to_sphere(vertices), triangles)


def make_fibonacci_sphere(n: int) -> TriMesh:
    """Quasi-uniform unstructured sphere mesh with ``n`` vertices.

    Vertices follow the golden-angle spiral; the triangulation is their
    convex hull, oriented outward.  Unlike the Platonic meshes it has no
    symmetry, which makes it the closer analogue of a generic coarse mesh.
    """
    if n < 4:
        raise ValueError("need at least 4 vertices")
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    theta = np.pi * (1.0 + np.sqrt(5.0)) * i
    vertices = project_to_sphere(np.column_stack([r * np.cos(theta), r * np.sin(theta), z]))
    triangles = ConvexHull(vertices).simplices.astype(np.int64)
    p = vertices[triangles]
    normal = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    inward = np.einsum("ij,ij->i", normal, p.mean(axis=1)) < 0
    triangles[inward] = triangles[inward][:, [0, 2, 1]]
    return TriMesh(vertices, triangles)


def refine(mesh: TriMesh, projector: SurfaceProjector | None = project_to_sphere) -> TriMesh:
    """Uniform red refinement with projection of the new midpoints.

    New vertices are appended after the coarse ones, one per coarse edge in
    sorted edge order.  ``projector=None`` gives the flat (unprojected)
    refinement, which is nested.
    """
    edges, tri_edge, counts = unique_edges(mesh.triangles)
    if np.any(counts != 2):
        raise MeshError("refine requires a closed 2-manifold: "
                        f"{np.count_nonzero(counts != 2)} edges not shared by exactly two triangles")
    n = mesh.num_vertices
    midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    if projector is not None:
        midpoints = projector(midpoints)
    vertices = np.vstack([mesh.vertices, midpoints])

    a, b, c = mesh.triangles.T
    # midpoint indices of the edges opposite a, b, c
    mbc, mca, mab = (n + tri_edge).T
    triangles = np.stack([
        np.stack([a, mab, mca], axis=1),
        np.stack([b, mbc, mab], axis=1),
        np.stack([c, mca, mbc], axis=1),
        np.stack([mab, mbc, mca], axis=1),
    ], axis=1).reshape(-1, 3)
    return TriMesh(vertices, triangles, level=mesh.level + 1, parent_edges=edges)


def refine_hierarchy(mesh: TriMesh, levels: int,
                     projector: SurfaceProjector | None = project_to_sphere) -> list[TriMesh]:
    """``[mesh, refine(mesh), ...]`` with ``levels`` meshes in total."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    meshes = [mesh]
    for _ in range(levels - 1):
        meshes.append(refine(meshes[-1], projector))
    return meshes


def mesh_stats(mesh: TriMesh) -> MeshStats:
    p = mesh.vertices[mesh.triangles]
    lengths = np.stack([np.linalg.norm(p[:, 1] - p[:, 2], axis=1),
                        np.linalg.norm(p[:, 2] - p[:, 0], axis=1),
                        np.linalg.norm(p[:, 0] - p[:, 1], axis=1)], axis=1)
    areas = triangle_areas(mesh.vertices, mesh.triangles)
    diam = lengths.max(axis=1)
    inradius = 2.0 * areas / lengths.sum(axis=1)
    circumradius = lengths.prod(axis=1) / (4.0 * areas)
    return MeshStats(h_max=float(diam.max()), h_min=float(diam.min()),
                     total_area=float(areas.sum()),
                     min_quality=float((inradius / circumradius).min()))


def save_mesh(mesh: TriMesh, path: str | Path) -> None:
    """Write ``mesh`` as ASCII OFF with round-trip exact coordinates."""
    nv, nt = mesh.num_vertices, mesh.num_triangles
    lines = ["OFF", f"{nv} {nt} {len(mesh.edges())}"]
    lines.extend(" ".join(repr(float(x)) for x in v) for v in mesh.vertices)
    lines.extend(f"3 {i} {j} {k}" for i, j, k in mesh.triangles)
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path: str | Path, projector: SurfaceProjector | None = None) -> TriMesh:
    """Read an ASCII OFF triangle mesh.

    ``projector``, if given, snaps every vertex onto the surface.  Comment
    lines (``#``) and blank lines are skipped; reported line numbers refer
    to the file as written.
    """
    raw = Path(path).read_text().splitlines()
    content = [(no, line.split("#", 1)[0].strip()) for no, line in enumerate(raw, 1)]
    content = [(no, line) for no, line in content if line]
    if not content or content[0][1] != "OFF":
        raise MeshFormatError("expected 'OFF' header",
                              content[0][0] if content else 1)
    if len(content) < 2:
        raise MeshFormatError("missing counts line", content[0][0] + 1)
    no, line = content[1]
    try:
        counts = [int(tok) for tok in line.split()]
    except ValueError:
        raise MeshFormatError(f"malformed counts line {line!r}", no) from None
    if len(counts) not in (2, 3) or min(counts) < 0:
        raise MeshFormatError(f"malformed counts line {line!r}", no)
    nv, nf = counts[0], counts[1]
    body = content[2:]
    if len(body) < nv + nf:
        raise MeshFormatError(f"expected {nv} vertex and {nf} face lines, "
                              f"found {len(body)} data lines",
                              raw and len(raw))
    vertices = np.empty((nv, 3))
    for r, (no, line) in enumerate(body[:nv]):
        toks = line.split()
        if len(toks) != 3:
            raise MeshFormatError("vertex line must have 3 coordinates", no)
        try:
            vertices[r] = [float(t) for t in toks]
        except ValueError:
            raise MeshFormatError(f"bad vertex coordinates {line!r}", no) from None
    triangles = np.empty((nf, 3), dtype=np.int64)
    for r, (no, line) in enumerate(body[nv:nv + nf]):
        try:
            toks = [int(t) for t in line.split()]
        except ValueError:
            raise MeshFormatError(f"bad face line {line!r}", no) from None
        if not toks or toks[0] != 3 or len(toks) != 4:
            raise MeshFormatError("only triangular faces ('3 i j k') are supported", no)
        if min(toks[1:]) < 0 or max(toks[1:]) >= nv:
            raise MeshFormatError(f"vertex index out of range in face {line!r}", no)
        triangles[r] = toks[1:]
    if len(body) > nv + nf:
        raise MeshFormatError("trailing data after face list", body[nv + nf][0])
    if projector is not None:
        vertices = projector(vertices)
    mesh = TriMesh(vertices, triangles)
    check_mesh(mesh)
    if signed_volume(mesh) <= 0.0:
        raise MeshError("mesh is not outward oriented (signed volume <= 0)")
    return mesh
