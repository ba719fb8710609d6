"""Mesh hierarchy with assembled forms and cached transfer operators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import AssembledForms, assemble
from .mesh import SurfaceProjector, TriMesh, project_to_sphere, refine_hierarchy
from .transfer import Prolongation, build_prolongation, compose_prolongations


@dataclass(eq=False)
class Hierarchy:
    """Levels ``0 .. num_levels - 1``, level 0 the coarsest.

    ``prolongations[k]`` maps level ``k`` to level ``k + 1``.
    """

    meshes: list[TriMesh]
    forms: list[AssembledForms]
    prolongations: list[Prolongation]
    _composed: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, mesh: TriMesh, levels: int,
              projector: SurfaceProjector | None = project_to_sphere) -> "Hierarchy":
        meshes = refine_hierarchy(mesh, levels, projector)
        return cls.from_meshes(meshes)

    @classmethod
    def from_meshes(cls, meshes: list[TriMesh]) -> "Hierarchy":
        forms = [assemble(m) for m in meshes]
        prolongations = [build_prolongation(c, f) for c, f in zip(meshes, meshes[1:])]
        return cls(list(meshes), forms, prolongations)

    @property
    def num_levels(self) -> int:
        return len(self.meshes)

    @property
    def dofs(self) -> list[int]:
        return [m.num_vertices for m in self.meshes]

    def truncated(self, levels: int) -> "Hierarchy":
        """The first ``levels`` levels, sharing matrices with ``self``."""
        if not 1 <= levels <= self.num_levels:
            raise ValueError(f"levels must be in 1..{self.num_levels}")
        return Hierarchy(self.meshes[:levels], self.forms[:levels],
                         self.prolongations[:levels - 1])

    def P(self, from_level: int, to_level: int) -> sp.csr_matrix:
        """Composed prolongation from ``from_level`` to ``to_level``."""
        key = (from_level, to_level)
        if key not in self._composed:
            if from_level == to_level:
                n = self.meshes[from_level].num_vertices
                self._composed[key] = sp.identity(n, format="csr")
            else:
                base = self.meshes[0].level
                self._composed[key] = compose_prolongations(
                    self.prolongations, from_level + base, to_level + base)
        return self._composed[key]

    def constant(self, level: int) -> np.ndarray:
        """The M-normalized constant function on ``level``."""
        M = self.forms[level].mass
        one = np.ones(M.shape[0])
        return one / np.sqrt(one @ (M @ one))
