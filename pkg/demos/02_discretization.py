"""Stiffness and mass matrices, the cotangent check, smoothers and Matrix Market.

The gradient-form stiffness matrix is compared entrywise with the classical
cotangent formula, the consistent mass matrix integrates constants to the
mesh area, and the two pointwise smoothers are applied to a shifted system.
"""

import numpy as np

from _common import output_dir
from surfeig import Hierarchy, assemble, cotangent_stiffness, make_octahedron
from surfeig.linalg import (ShiftedOperator, gauss_seidel, kaczmarz, read_matrix_market,
                            write_matrix_market)
from surfeig.mesh import mesh_stats

out = output_dir("discretization")
h = Hierarchy.build(make_octahedron(), 4)

for k, mesh in enumerate(h.meshes):
    forms = assemble(mesh)
    A, M = forms.stiffness, forms.mass
    diff = abs(A - cotangent_stiffness(mesh)).max() / abs(A).max()
    one = np.ones(mesh.num_vertices)
    print(f"level {k}: {mesh.num_vertices:5d} DoF  cotangent diff {diff:.1e}  "
          f"A 1 = {np.abs(A @ one).max():.1e}  1'M1 - area = "
          f"{one @ M @ one - mesh_stats(mesh).total_area:.1e}")

forms = h.forms[3]
op = ShiftedOperator(forms.stiffness, forms.mass, 5.0)
rng = np.random.default_rng(0)
x_true = rng.standard_normal(forms.dof_count)
b = op @ x_true
x0 = np.zeros_like(b)
for name, fn, kw in (("symmetric Gauss-Seidel", gauss_seidel, {"sweeps": 1}),
                     ("Kaczmarz", kaczmarz, {"sweeps": 5})):
    x = fn(op, b, x0, **kw)
    print(f"{name}: residual {np.linalg.norm(b - op @ x) / np.linalg.norm(b):.3f} "
          "of the initial one after one call")

write_matrix_market(out / "stiffness.mtx", forms.stiffness)
back = read_matrix_market(out / "stiffness.mtx")
print("Matrix Market round trip exact:", abs(back - forms.stiffness).max() == 0)
