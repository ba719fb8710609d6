"""Sphere meshes, refinement with projection, OFF files and prolongation.

The unstructured 54-vertex Fibonacci mesh is refined four times; every
refinement splits each triangle into four and projects the edge midpoints
onto the unit sphere, so the levels are not nested.  The prolongation is
still the plain midpoint-averaging matrix.
"""

import numpy as np

from _common import output_dir
from surfeig import Hierarchy, load_mesh, make_fibonacci_sphere, save_mesh
from surfeig.mesh import mesh_stats

out = output_dir("meshes")
h = Hierarchy.build(make_fibonacci_sphere(54), 5)

print(f"{'level':>5} {'DoF':>7} {'h_max':>8} {'area':>9} {'quality':>8}")
for k, mesh in enumerate(h.meshes):
    s = mesh_stats(mesh)
    print(f"{k:5d} {mesh.num_vertices:7d} {s.h_max:8.4f} {s.total_area:9.5f} {s.min_quality:8.4f}")
    save_mesh(mesh, out / f"level_{k}.off")
print(f"area of the unit sphere: {4 * np.pi:.5f}")

# OFF round trip
back = load_mesh(out / "level_2.off")
print("OFF round trip max vertex difference:",
      np.abs(back.vertices - h.meshes[2].vertices).max())

# prolongation: rows of the identity for inherited vertices, [1/2, 1/2] for midpoints
P = h.prolongations[0].matrix
print("prolongation shape", P.shape, "row sums in", np.unique(np.round(P.sum(axis=1).A1, 14)))
x = h.meshes[0].vertices[:, 2]
gap = np.abs(P @ x - h.meshes[1].vertices[:, 2]).max()
print(f"prolonged coordinate z vs projected fine z: max gap {gap:.3e} (non-nested levels)")
