"""Multigrid eigensolvers for the Laplace-Beltrami operator on triangulated spheres.

Modules
-------
mesh         triangle meshes, refinement with projection, OFF I/O
transfer     prolongation/restriction between non-nested levels
assembly     P1 stiffness and mass matrices, cotangent oracle
hierarchy    mesh levels with assembled forms and composed transfers
linalg       smoothers, direct solves, dense pencils, Matrix Market I/O
eigensolver  two-grid, cascade, bootstrap multigrid (BMG/BFMG)
estimator    residual a posteriori estimator with the geometric term
validation   exact sphere spectrum, cluster matching, rate fits
plotting     native SVG figures
cli          batch experiment driver
"""

__version__ = "0.1.0"

from .assembly import AssembledForms, assemble, cotangent_stiffness
from .eigensolver import (BmgConfig, EigenSet, EnrichmentPolicy, SourceMethod, bfmg,
                          bmg_init, bmg_vcycle, cascade_two_grid, coarse_eigensolve,
                          two_grid)
from .estimator import estimator_breakdown, global_estimator, local_estimator
from .hierarchy import Hierarchy
from .mesh import (TriMesh, load_mesh, make_fibonacci_sphere, make_icosahedron,
                   make_octahedron, refine, save_mesh)
from .validation import cluster_error, fit_rate, match_spectrum, sphere_spectrum

__all__ = [
    "AssembledForms", "assemble", "cotangent_stiffness", "BmgConfig", "EigenSet",
    "EnrichmentPolicy", "SourceMethod", "bfmg", "bmg_init", "bmg_vcycle",
    "cascade_two_grid", "coarse_eigensolve", "two_grid", "estimator_breakdown",
    "global_estimator", "local_estimator", "Hierarchy", "TriMesh", "load_mesh",
    "make_fibonacci_sphere", "make_icosahedron", "make_octahedron", "refine", "save_mesh",
    "cluster_error", "fit_rate", "match_spectrum", "sphere_spectrum",
]
