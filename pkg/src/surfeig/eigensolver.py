"""Two-grid and bootstrap multigrid eigensolvers for the surface Laplacian.

Naming follows one convention throughout: eigenvalues stored in an
:class:`EigenSet` are eigenvalues of the *shifted* pencil
``(A - shift M) x = lam M x``; ``EigenSet.absolute`` adds the shift back.

Algorithms
----------
``two_grid`` / ``cascade_two_grid``
    coarse direct eigensolve, then one shifted indefinite source problem per
    finer level and a Rayleigh quotient.
``bmg_vcycle`` / ``bfmg``
    bootstrap cycles: a small dense eigensolve in the coarse space enriched
    by fine-level source approximations, ascending source solves through the
    intermediate levels, smoothing on the current finest level, and
    enrichment/shift updates.
"""

from __future__ import annotations

import re
import time
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .assembly import AssembledForms
from .hierarchy import Hierarchy
from .linalg import (DirectSolver, ShiftedOperator, SingularMatrixError,
                     b_orthonormalize, dense_generalized_eig, gauss_seidel,
                     kaczmarz)

KERNEL_TOL = 1e-10


class EigensolverError(RuntimeError):
    pass


class SingularShiftError(EigensolverError):
    """The shifted source operator stayed singular after one perturbation."""


class EmptyEnrichmentError(EigensolverError):
    pass


class IndefiniteEnrichmentError(EigensolverError):
    """The enriched mass matrix is not positive definite.

    ``dependent`` lists enrichment columns that are nearly representable by
    the coarse space.
    """

    def __init__(self, message: str, dependent: list[int]):
        self.dependent = dependent
        super().__init__(message)


@dataclass(eq=False)
class EigenSet:
    """Eigenvalue approximations with their coefficient vectors.

    ``basis`` is ``"coarse"``, ``"fine"`` or ``"enriched"``; ``mass`` is the
    matrix the columns of ``vectors`` are orthonormal against.
    """

    values: np.ndarray
    vectors: np.ndarray
    shift: float = 0.0
    basis: str = "coarse"
    level: int = 0
    mass: object = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim == 1:
            self.vectors = self.vectors[:, None]
        if self.values.shape[0] != self.vectors.shape[1]:
            raise ValueError("values and vectors counts differ")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def absolute(self) -> np.ndarray:
        return self.values + self.shift

    def subset(self, indices) -> "EigenSet":
        indices = np.asarray(indices, dtype=int)
        return replace(self, values=self.values[indices], vectors=self.vectors[:, indices])


@dataclass(frozen=True)
class SourceMethod:
    """How fine-level source problems are approximated.

    ``kind`` is ``"direct"``, ``"gauss_seidel"`` or ``"kaczmarz"``.
    """

    kind: str = "direct"
    sweeps: int = 0

    _DEFAULT_SWEEPS = {"direct": 0, "gauss_seidel": 1, "kaczmarz": 5}

    def __post_init__(self):
        if self.kind not in self._DEFAULT_SWEEPS:
            raise ValueError(f"unknown source method {self.kind!r}")
        if self.sweeps < 0:
            raise ValueError("sweeps must be >= 0")

    @classmethod
    def parse(cls, text: str) -> "SourceMethod":
        """Parse ``direct``, ``gauss_seidel``, ``kaczmarz(5)``, ``gs(1)`` ..."""
        m = re.fullmatch(r"\s*([a-z_-]+)\s*(?:\(\s*(\d+)\s*\))?\s*", text.lower())
        if not m:
            raise ValueError(f"cannot parse source method {text!r}")
        kind = {"gs": "gauss_seidel", "gauss-seidel": "gauss_seidel"}.get(m[1], m[1])
        if kind not in cls._DEFAULT_SWEEPS:
            raise ValueError(f"unknown source method {text!r}")
        sweeps = int(m[2]) if m[2] is not None else cls._DEFAULT_SWEEPS[kind]
        return cls(kind, sweeps)

    def __str__(self) -> str:
        return self.kind if self.kind == "direct" else f"{self.kind}({self.sweeps})"


DIRECT = SourceMethod()


class SolverCache:
    """Small LRU cache of sparse factorizations keyed by ``(level, shift)``."""

    def __init__(self, maxsize: int = 4):
        self.maxsize = maxsize
        self._cache: OrderedDict = OrderedDict()

    def get(self, forms: AssembledForms, level, shift: float) -> DirectSolver:
        key = (level, shift)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        nullspace = np.ones(forms.dof_count) if shift == 0.0 else None
        solver = DirectSolver(ShiftedOperator(forms.stiffness, forms.mass, shift),
                              nullspace=nullspace)
        self._cache[key] = solver
        if len(self._cache) > self.maxsize:
            self._cache.popitem(last=False)
        return solver


def _deflate(M, x: np.ndarray, basis: np.ndarray | None) -> np.ndarray:
    if basis is None or basis.shape[1] == 0:
        return x
    return x - basis @ (basis.T @ (M @ x))


def approximate_source(forms: AssembledForms, shift: float, rhs: np.ndarray,
                       method: SourceMethod = DIRECT, x0: np.ndarray | None = None,
                       deflate: np.ndarray | None = None,
                       solvers: SolverCache | None = None, level=None) -> np.ndarray:
    """Solve or relax ``(A - shift M) x = rhs``.

    A zero shift makes the operator singular with the constants as kernel;
    the right side is then projected onto the range first.  ``deflate``
    holds M-orthonormal columns projected out of the result.  A singular
    nonzero shift is perturbed by ``1e-8 (1 + |shift|)`` once before
    :class:`SingularShiftError` is raised.
    """
    M = forms.mass
    if shift == 0.0:
        rhs = rhs - rhs.mean()
    if method.kind == "direct":
        solvers = solvers if solvers is not None else SolverCache(maxsize=1)
        try:
            x = solvers.get(forms, level, shift).solve(rhs)
        except SingularMatrixError:
            perturbed = shift + 1e-8 * (1.0 + abs(shift))
            try:
                x = solvers.get(forms, level, perturbed).solve(rhs)
            except SingularMatrixError as exc:
                raise SingularShiftError(
                    f"shifted operator singular at shift {shift!r} (level {level})") from exc
    else:
        op = ShiftedOperator(forms.stiffness, forms.mass, shift)
        x = np.zeros_like(rhs) if x0 is None else x0
        if method.kind == "gauss_seidel":
            x = gauss_seidel(op, rhs, x, method.sweeps)
        else:
            x = kaczmarz(op, rhs, x, method.sweeps)
    return _deflate(M, x, deflate)


def _normalize(M, x: np.ndarray) -> np.ndarray:
    norm = np.sqrt(x @ (M @ x))
    if norm == 0.0 or not np.isfinite(norm):
        raise EigensolverError("source approximation vanished")
    return x / norm


def _rq(forms: AssembledForms, x: np.ndarray) -> float:
    return float(x @ (forms.stiffness @ x)) / float(x @ (forms.mass @ x))


# --- coarse and two-grid solves ---------------------------------------------

def coarse_eigensolve(forms: AssembledForms, shift: float = 0.0,
                      count: int | None = None, level: int = 0) -> EigenSet:
    """Lowest ``count`` eigenpairs of ``(A - shift M, M)`` by dense solve."""
    A = forms.stiffness.toarray() - shift * forms.mass.toarray()
    values, vectors = dense_generalized_eig(A, forms.mass.toarray())
    if count is not None:
        values, vectors = values[:count], vectors[:, :count]
    return EigenSet(values, vectors, shift=shift, basis="coarse", level=level,
                    mass=forms.mass)


def fine_source_solve(forms_fine: AssembledForms, shift: float, coarse_value: float,
                      prolonged: np.ndarray, method: SourceMethod = DIRECT,
                      x0: np.ndarray | None = None, deflate=None,
                      solvers: SolverCache | None = None, level=None) -> np.ndarray:
    """Approximate ``(A_h - shift M_h) u = coarse_value M_h prolonged``.

    The kernel case (zero coarse value at zero shift) returns ``prolonged``.
    """
    if abs(coarse_value) <= KERNEL_TOL and abs(shift) <= KERNEL_TOL:
        return np.array(prolonged, dtype=float)
    rhs = coarse_value * (forms_fine.mass @ prolonged)
    if not np.any(rhs):
        raise EigensolverError("zero right-hand side in fine source problem")
    if x0 is None:
        x0 = np.array(prolonged, dtype=float)
    return approximate_source(forms_fine, shift, rhs, method, x0=x0, deflate=deflate,
                              solvers=solvers, level=level)


def two_grid(coarse: EigenSet, index: int, fine: AssembledForms, P,
             method: SourceMethod = DIRECT, deflate: np.ndarray | None = None,
             solvers: SolverCache | None = None, level=None) -> tuple[float, np.ndarray]:
    """One two-grid step for pair ``index`` of ``coarse``.

    Solves ``(A_h - (shift + lam_H) M_h) u = M_h P u_H`` (or relaxes it from
    ``P u_H``), keeps ``u`` M-orthogonal to the columns of ``deflate`` and
    to the constants for a nonzero target, and returns the Rayleigh quotient
    ``lam^h`` (absolute, shift included) with the M-normalized ``u``.
    """
    lam_H = float(coarse.values[index])
    target = coarse.shift + lam_H
    prolonged = P @ coarse.vectors[:, index]
    M = fine.mass
    if abs(target) <= KERNEL_TOL:
        u = np.array(prolonged)
    else:
        one = np.ones(M.shape[0])
        one /= np.sqrt(one @ (M @ one))
        basis = one[:, None] if deflate is None else np.column_stack([one, deflate])
        # accepted vectors are only approximately orthogonal; orthonormalize first
        basis, _ = b_orthonormalize(basis, M, drop_tol=1e-8)
        u = approximate_source(fine, target, M @ prolonged, method, x0=prolonged,
                               deflate=None, solvers=solvers, level=level)
        u = _deflate(M, _deflate(M, u, basis), basis)
    u = _normalize(M, u)
    return _rq(fine, u), u


def cascade_two_grid(hierarchy: Hierarchy, shift: float = 0.0, levels: int | None = None,
                     method: SourceMethod = DIRECT, indices=None,
                     deflate: bool = True, callback=None) -> tuple[EigenSet, list[np.ndarray]]:
    """Two-grid steps applied level by level from the coarsest mesh.

    Each level's approximations become the next level's coarse data.
    Returns the finest-level :class:`EigenSet` and the per-level absolute
    values (level 0 being the coarse direct eigensolve).  ``callback(level,
    eigenset)`` is invoked after every level, the fine-level vectors being
    nodal values on that level.
    """
    K = hierarchy.num_levels if levels is None else levels
    if not 1 <= K <= hierarchy.num_levels:
        raise ValueError(f"levels must be in 1..{hierarchy.num_levels}")
    n0 = hierarchy.dofs[0]
    indices = np.arange(n0) if indices is None else np.asarray(indices, dtype=int)
    coarse = coarse_eigensolve(hierarchy.forms[0], shift, count=int(indices.max()) + 1)
    current = coarse.subset(indices)
    history = [current.absolute.copy()]
    if callback is not None:
        callback(0, current)
    solvers = SolverCache(maxsize=1)
    for k in range(1, K):
        forms = hierarchy.forms[k]
        P = hierarchy.prolongations[k - 1].matrix
        values = np.empty(len(indices))
        vectors = np.empty((forms.dof_count, len(indices)))
        for j in range(len(indices)):
            basis = vectors[:, :j] if deflate and j > 0 else None
            lam, u = two_grid(current, j, forms, P, method, deflate=basis,
                              solvers=solvers, level=k)
            values[j], vectors[:, j] = lam - shift, u
        current = EigenSet(values, vectors, shift=shift, basis="fine", level=k,
                           mass=forms.mass)
        history.append(current.absolute.copy())
        if callback is not None:
            callback(k, current)
    return current, history


# --- enrichment ---------------------------------------------------------------

def cluster_values(values, rel_gap: float = 0.15) -> list[np.ndarray]:
    """Single-linkage clusters of sorted ``values`` (index arrays)."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    clusters, start = [], 0
    for i in range(1, len(order)):
        a, b = values[order[i - 1]], values[order[i]]
        if b - a > rel_gap * max(abs(a), abs(b), 1.0):
            clusters.append(order[start:i])
            start = i
    clusters.append(order[start:])
    return clusters


def default_cluster_tol(values, rel_gap: float = 0.15) -> float:
    """Half the largest gap between adjacent value clusters."""
    values = np.asarray(values, dtype=float)
    clusters = cluster_values(values, rel_gap)
    if len(clusters) < 2:
        return np.inf
    gaps = [values[b].min() - values[a].max() for a, b in zip(clusters, clusters[1:])]
    return 0.5 * max(gaps)


@dataclass(frozen=True)
class EnrichmentPolicy:
    """Which eigenpairs of the (enriched) coarse solve feed the source problems.

    kind
        ``"window"``: indices ``target - size + 1 .. target``;
        ``"largest"``: the ``size`` largest pairs;
        ``"near_shift"``: pairs with ``|lam - shift| < tol``, at most ``size``
        of them, nearest first;
        ``"fixed"``: the explicit ``indices``.
    All indices are 0-based positions in the ascending eigenvalue list.
    """

    kind: str = "near_shift"
    size: int | None = None
    target: int | None = None
    tol: float | None = None
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("window", "largest", "near_shift", "fixed"):
            raise ValueError(f"unknown enrichment policy {self.kind!r}")
        if self.kind in ("window", "largest") and not self.size:
            raise ValueError(f"policy {self.kind!r} needs a positive size")
        if self.kind == "window" and self.target is None:
            raise ValueError("window policy needs a target index")

    @classmethod
    def window(cls, target: int, size: int) -> "EnrichmentPolicy":
        return cls("window", size=size, target=target)

    @classmethod
    def largest(cls, size: int) -> "EnrichmentPolicy":
        return cls("largest", size=size)

    @classmethod
    def near_shift(cls, size: int | None = None, tol: float | None = None) -> "EnrichmentPolicy":
        return cls("near_shift", size=size, tol=tol)

    @classmethod
    def fixed(cls, indices) -> "EnrichmentPolicy":
        return cls("fixed", indices=tuple(int(i) for i in indices))

    def __str__(self) -> str:
        if self.kind == "window":
            return f"window({self.target},{self.size})"
        if self.kind == "largest":
            return f"largest({self.size})"
        if self.kind == "fixed":
            return f"fixed({','.join(map(str, self.indices))})"
        tol = "auto" if self.tol is None else repr(self.tol)
        return f"near_shift({self.size},{tol})"


def select_enrichment(eigs: EigenSet, policy: EnrichmentPolicy | None = None, *,
                      tol: float | None = None, cap: int | None = None) -> np.ndarray:
    """Index set of enrichment candidates (ascending 0-based indices).

    Without a policy this is the near-shift rule with ``tol`` and ``cap``;
    distances are measured from the shift, i.e. ``|eigs.values|``.
    """
    if policy is None:
        policy = EnrichmentPolicy.near_shift(size=cap, tol=tol)
    n = len(eigs)
    if n == 0:
        raise EmptyEnrichmentError("no eigenpairs to select from")
    if policy.kind == "window":
        chosen = np.arange(max(policy.target - policy.size + 1, 0), min(policy.target + 1, n))
    elif policy.kind == "largest":
        chosen = np.arange(max(n - policy.size, 0), n)
    elif policy.kind == "fixed":
        chosen = np.unique(np.array([i for i in policy.indices if 0 <= i < n], dtype=int))
    else:
        distance = np.abs(eigs.values)
        limit = policy.tol if policy.tol is not None else default_cluster_tol(eigs.absolute)
        candidates = np.flatnonzero(distance < limit)
        candidates = candidates[np.argsort(distance[candidates], kind="stable")]
        if policy.size is not None:
            candidates = candidates[:policy.size]
        chosen = np.sort(candidates)
    if chosen.size == 0:
        raise EmptyEnrichmentError(f"enrichment policy {policy} selected no eigenpairs")
    return chosen


@dataclass(eq=False)
class EnrichedSystem:
    """Coarse space plus fine-level enrichment block.

    A block coordinate vector ``(c, d)`` stands for the fine function
    ``P c + U_block d``.
    """

    coarse_dim: int
    U_block: np.ndarray
    A_block: np.ndarray
    M_block: np.ndarray
    P: sp.csr_matrix
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    coarse_block: str = "assembled"
    level: int = 0

    @property
    def enrichment_dim(self) -> int:
        return self.U_block.shape[1]

    def expand(self, coefficients: np.ndarray) -> np.ndarray:
        """Map block coordinates (vector or columns) to fine nodal values."""
        c = np.asarray(coefficients, dtype=float)
        coarse, enrich = c[:self.coarse_dim], c[self.coarse_dim:]
        return self.P @ coarse + self.U_block @ enrich


def build_enriched_system(coarse: AssembledForms, fine: AssembledForms, P, U_block,
                          indices=None, coarse_block: str = "assembled",
                          level: int = 0) -> EnrichedSystem:
    """Assemble the 2x2 block stiffness and mass matrices.

    Off-diagonal blocks are ``P^T A_h U`` and its transpose, the bottom-right
    block ``U^T A_h U`` (likewise for the mass).  The top-left block is the
    coarse matrix itself for ``coarse_block="assembled"``, or the Galerkin
    product ``P^T A_h P`` for ``coarse_block="galerkin"``; the latter makes
    the enriched pencil a Rayleigh-Ritz projection of the fine pencil.
    """
    P = sp.csr_matrix(P)
    U = np.asarray(U_block, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if U.shape[0] != P.shape[0]:
        raise ValueError(f"enrichment has {U.shape[0]} rows, prolongation {P.shape[0]}")
    if P.shape[1] != coarse.dof_count or P.shape[0] != fine.dof_count:
        raise ValueError("prolongation shape does not match the coarse/fine forms")
    blocks = []
    for Kc, Kf in ((coarse.stiffness, fine.stiffness), (coarse.mass, fine.mass)):
        KfU = Kf @ U
        if coarse_block == "assembled":
            top = Kc.toarray()
        elif coarse_block == "galerkin":
            top = (P.T @ (Kf @ P)).toarray()
        else:
            raise ValueError(f"unknown coarse_block {coarse_block!r}")
        cross = np.asarray(P.T @ KfU)
        corner = U.T @ KfU
        B = np.block([[top, cross], [cross.T, corner]])
        blocks.append(0.5 * (B + B.T))
    indices = np.zeros(0, dtype=int) if indices is None else np.asarray(indices, dtype=int)
    return EnrichedSystem(coarse.dof_count, U, blocks[0], blocks[1], P, indices,
                          coarse_block, level)


def enriched_eigensolve(system: EnrichedSystem, shift: float = 0.0,
                        count: int | None = None, drop_tol: float = 1e-12) -> EigenSet:
    """Dense eigensolve of the shifted block pencil (block coordinates).

    A positive semidefinite mass block whose smallest eigenvalue is below
    ``drop_tol`` times its largest is restricted to its numerical range
    (near-dependent enrichment directions are discarded).  An indefinite
    mass block raises :class:`IndefiniteEnrichmentError`.
    """
    A = system.A_block - shift * system.M_block
    M = system.M_block
    mu, W = scipy.linalg.eigh(M)
    scale = mu[-1]
    if mu[0] < -drop_tol * scale:
        # directions of negative "mass" live mostly in the enrichment block
        bad = W[:, mu < -drop_tol * scale]
        weight = np.sum(bad[system.coarse_dim:] ** 2, axis=1)
        dependent = [int(i) for i in np.flatnonzero(weight > 1.0 / max(system.enrichment_dim, 1) * 0.5)]
        raise IndefiniteEnrichmentError(
            f"enriched mass matrix is indefinite (min eigenvalue {mu[0]:.3e}); "
            f"enrichment vectors {dependent} are nearly representable in the coarse space",
            dependent)
    if mu[0] > drop_tol * scale:
        values, vectors = dense_generalized_eig(A, M)
    else:
        keep = mu > drop_tol * scale
        B = W[:, keep] / np.sqrt(mu[keep])
        values, Y = scipy.linalg.eigh(0.5 * (B.T @ A @ B + (B.T @ A @ B).T))
        vectors = B @ Y
    if count is not None:
        values, vectors = values[:count], vectors[:, :count]
    return EigenSet(values, vectors, shift=shift, basis="enriched", level=system.level,
                    mass=system.M_block)


def expand_to_fine(system: EnrichedSystem, eigs: EigenSet) -> np.ndarray:
    return system.expand(eigs.vectors)


# --- bootstrap multigrid ------------------------------------------------------

@dataclass(frozen=True)
class BmgConfig:
    """Settings of a BMG/BFMG run.

    shift_update
        ``"fixed"`` keeps the shift; ``"average"`` adds the mean shifted
        Rayleigh quotient of the new enrichment vectors after every cycle;
        ``"auto"`` (default) averages for a nonzero shift and keeps it fixed
        otherwise.
    coarse_block
        top-left block of the enriched matrices, see
        :func:`build_enriched_system`.
    deflate
        keep source iterates M-orthogonal to the non-selected enriched
        eigenvectors lying closer to the shift than every selected one
        (the "previous" eigenfunctions of an unshifted run).
    """

    shift: float = 0.0
    policy: EnrichmentPolicy = field(default_factory=lambda: EnrichmentPolicy.near_shift(size=20))
    method: SourceMethod = DIRECT
    shift_update: str = "auto"
    coarse_block: str = "galerkin"
    deflate: bool = True
    drop_tol: float = 1e-10

    def __post_init__(self):
        if self.shift_update == "auto":
            object.__setattr__(self, "shift_update", "average" if self.shift != 0.0 else "fixed")
        if self.shift_update not in ("fixed", "average"):
            raise ValueError(f"unknown shift update {self.shift_update!r}")


@dataclass(eq=False)
class BmgState:
    hierarchy: Hierarchy
    config: BmgConfig
    shift: float
    level: int = 0
    X: np.ndarray | None = None
    indices: np.ndarray | None = None
    system: EnrichedSystem | None = None
    eigs: EigenSet | None = None
    ritz: EigenSet | None = None
    history: list = field(default_factory=list)
    solvers: SolverCache = field(default_factory=SolverCache)
    mass_solvers: dict = field(default_factory=dict)


def update_shift(shift: float, quotients, policy: str = "average") -> float:
    """New shift = old shift + mean of the shifted Rayleigh quotients."""
    if policy == "fixed":
        return shift
    quotients = np.asarray(quotients, dtype=float)
    if quotients.size == 0:
        raise ValueError("no Rayleigh quotients to average")
    return shift + float(quotients.mean())


def _enrich(state: BmgState) -> None:
    """Build and solve the enriched system for the state's current X and shift."""
    h = state.hierarchy
    k = state.level
    X = np.zeros((h.dofs[k], 0)) if state.X is None else state.X
    state.system = build_enriched_system(h.forms[0], h.forms[k], h.P(0, k), X,
                                         indices=state.indices,
                                         coarse_block=state.config.coarse_block, level=k)
    state.eigs = enriched_eigensolve(state.system, state.shift)


def bmg_init(hierarchy: Hierarchy, config: BmgConfig) -> BmgState:
    """Coarse eigensolve that seeds the bootstrap cycles."""
    state = BmgState(hierarchy, config, shift=config.shift)
    _enrich(state)
    state.indices = select_enrichment(state.eigs, config.policy)
    return state


def _to_level(state: BmgState, coeffs: np.ndarray, s: int) -> np.ndarray:
    """Block coordinates of the current enriched system as nodal values on level ``s``.

    The enriched space lives on level ``state.level``; coarser levels get
    the L2 projection, the next finer level the prolongation.
    """
    h, sys, top = state.hierarchy, state.system, state.level
    c, d = coeffs[:sys.coarse_dim], coeffs[sys.coarse_dim:]
    if s == top:
        return sys.expand(coeffs)
    if s == top + 1:
        return h.prolongations[top].matrix @ sys.expand(coeffs)
    if s > top:
        raise ValueError(f"level {s} is more than one level above the enrichment")
    forms = h.forms[s]
    pairing = forms.mass @ (h.P(0, s) @ c)
    if sys.enrichment_dim:
        pairing += h.P(s, top).T @ (h.forms[top].mass @ (sys.U_block @ d))
    if s not in state.mass_solvers:
        state.mass_solvers[s] = DirectSolver(forms.mass, check_condition=False)
    return state.mass_solvers[s].solve(pairing)


def _deflation_set(state: BmgState, indices: np.ndarray) -> np.ndarray:
    """Non-selected enriched pairs lying closer to the shift than the selection."""
    if not state.config.deflate:
        return np.zeros(0, dtype=int)
    distance = np.abs(state.eigs.values)
    rest = np.setdiff1d(np.arange(len(state.eigs)), indices)
    return rest[distance[rest] < distance[indices].min()]


def _orthonormal_on(state: BmgState, coeffs: np.ndarray, s: int) -> np.ndarray | None:
    if coeffs.shape[1] == 0:
        return None
    forms = state.hierarchy.forms[s]
    Q, _ = b_orthonormalize(_to_level(state, coeffs, s), forms.mass,
                            drop_tol=state.config.drop_tol)
    return Q


def _project_out(M, U: np.ndarray, Q: np.ndarray | None) -> np.ndarray:
    if Q is None:
        return U
    for _ in range(2):
        U = U - Q @ (Q.T @ (M @ U))
    return U


def bmg_vcycle(state: BmgState, k: int) -> BmgState:
    """One BMG V-cycle between level 0 and level ``k`` (0-based, ``k >= 1``).

    The state must carry the enrichment of level ``k - 1`` (none for
    ``k = 1``).  Steps: enriched eigensolve at the current shift, ascending
    source solves on levels ``1 .. k-1``, source approximation on level
    ``k``, M-orthonormalization, shift update, and the enriched eigensolve
    in the updated space.

    The mixed right side on level 1 pairs the enriched eigenfunction (a
    coarse part plus a level ``k-1`` part) with the level-1 test functions;
    the iterate is initialized with the resulting L2 projection.  Higher
    levels pair the prolonged previous iterate.
    """
    h, cfg = state.hierarchy, state.config
    if not 1 <= k < h.num_levels:
        raise ValueError(f"cycle level {k} outside 1..{h.num_levels - 1}")
    if state.level != k - 1:
        raise ValueError(f"state holds level-{state.level} enrichment, cycle needs level {k - 1}")
    t0 = time.perf_counter()
    if state.eigs is None:
        _enrich(state)
    indices = select_enrichment(state.eigs, cfg.policy)
    state.indices = indices
    eigs = state.eigs.subset(indices)
    deflation = state.eigs.vectors[:, _deflation_set(state, indices)]
    shift = state.shift
    lam = eigs.values

    current = _to_level(state, eigs.vectors, 0) if k == 1 else None
    for s in range(1, k + 1):
        forms = h.forms[s]
        if s == 1 and k > 1:
            guess = _to_level(state, eigs.vectors, 1)
        else:
            guess = h.prolongations[s - 1].matrix @ current
        pairing = forms.mass @ guess
        nxt = np.empty((forms.dof_count, len(indices)))
        for j in range(len(indices)):
            nxt[:, j] = _source(forms, shift, lam[j], pairing[:, j], guess[:, j],
                                cfg.method, state.solvers, s)
        current = _project_out(forms.mass, nxt, _orthonormal_on(state, deflation, s))

    forms = h.forms[k]
    X, dropped = b_orthonormalize(current, forms.mass, drop_tol=cfg.drop_tol,
                                  against=h.constant(k)[:, None])
    if X.shape[1] == 0:
        raise EmptyEnrichmentError(f"all enrichment vectors dropped on level {k}")

    # Rayleigh-Ritz inside the new enrichment space on level k
    AX = forms.stiffness @ X
    ritz_values, Y = scipy.linalg.eigh(0.5 * (X.T @ AX + AX.T @ X))
    quotients = np.einsum("ij,ij->j", X, AX) - shift
    new_shift = update_shift(shift, quotients, cfg.shift_update)

    state.X, state.level, state.shift = X, k, new_shift
    _enrich(state)
    state.ritz = EigenSet(ritz_values - new_shift, X @ Y, shift=new_shift, basis="fine",
                          level=k, mass=forms.mass)
    state.history.append({
        "level": k,
        "dof": forms.dof_count,
        "shift_in": shift,
        "shift_out": new_shift,
        "indices": indices.tolist(),
        "deflated": int(deflation.shape[1]),
        "dropped": [int(indices[i]) for i in dropped],
        "ritz_values": ritz_values.tolist(),
        "enriched_values": state.eigs.absolute.tolist(),
        "seconds": time.perf_counter() - t0,
    })
    return state


def _source(forms, shift, lam, pairing, guess, method, solvers, level):
    if abs(lam) <= KERNEL_TOL and abs(shift) <= KERNEL_TOL:
        return guess.copy()
    return approximate_source(forms, shift, lam * pairing, method, x0=guess,
                              solvers=solvers, level=level)


@dataclass(eq=False)
class BfmgResult:
    eigs: EigenSet          # finest-level Rayleigh-Ritz pairs of the enrichment space
    enriched: EigenSet      # final enriched coarse eigensolve (block coordinates)
    state: BmgState
    level_values: list[np.ndarray]   # per cycle: absolute Ritz values on that level
    dofs: list[int]


def bfmg(hierarchy: Hierarchy, config: BmgConfig, levels: int | None = None) -> BfmgResult:
    """Bootstrap full multigrid: V-cycles of increasing depth up to ``levels``."""
    K = hierarchy.num_levels if levels is None else levels
    if not 2 <= K <= hierarchy.num_levels:
        raise ValueError(f"bfmg needs 2 <= levels <= {hierarchy.num_levels}")
    state = bmg_init(hierarchy, config)
    for k in range(1, K):
        bmg_vcycle(state, k)
    level_values = [np.asarray(rec["ritz_values"]) for rec in state.history]
    return BfmgResult(state.ritz, state.eigs, state, level_values,
                      [rec["dof"] for rec in state.history])


def lowest_eigenpairs(forms: AssembledForms, count: int, level: int = 0,
                      dense_limit: int = 2000) -> EigenSet:
    """Lowest ``count`` eigenpairs of ``(A, M)``: dense up to ``dense_limit`` DoF,
    shift-invert Lanczos above it (deterministic start vector)."""
    n = forms.dof_count
    if n <= dense_limit:
        return coarse_eigensolve(forms, 0.0, count, level=level)
    import scipy.sparse.linalg as spla
    v0 = np.cos(np.arange(n) * 0.7) + 1.5
    values, vectors = spla.eigsh(forms.stiffness.tocsc(), k=count, M=forms.mass.tocsc(),
                                 sigma=-1.0, which="LM", v0=v0)
    order = np.argsort(values)
    values, vectors = values[order], vectors[:, order]
    return EigenSet(values, vectors, 0.0, basis="fine", level=level, mass=forms.mass)
