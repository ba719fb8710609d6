"""Exact sphere spectrum, cluster matching and convergence-rate fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ExactSpectrum:
    """Eigenvalues ``l(l+1)`` of the unit-sphere Laplacian with multiplicity ``2l+1``."""

    degrees: np.ndarray
    values: np.ndarray
    multiplicities: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def index_range(self, l: int) -> tuple[int, int]:
        """1-based first and last position of degree ``l`` in the sorted spectrum."""
        return l * l + 1, (l + 1) ** 2

    def expanded(self) -> np.ndarray:
        """Values repeated by multiplicity, ascending."""
        return np.repeat(self.values, self.multiplicities)


def sphere_spectrum(l_max: int) -> ExactSpectrum:
    if l_max < 0:
        raise ValueError("l_max must be >= 0")
    l = np.arange(l_max + 1)
    return ExactSpectrum(l, (l * (l + 1)).astype(float), 2 * l + 1)


@dataclass
class ClusterMatch:
    value: float
    multiplicity: int
    matched: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.matched)

    @property
    def loss(self) -> bool:
        return self.count < self.multiplicity

    def _rel_errors(self) -> np.ndarray:
        m = np.asarray(self.matched, dtype=float)
        return np.abs(m - self.value) / max(self.value, 1.0)

    @property
    def mean_rel_error(self) -> float:
        return float(self._rel_errors().mean()) if self.matched else float("nan")

    @property
    def max_rel_error(self) -> float:
        return float(self._rel_errors().max()) if self.matched else float("nan")


@dataclass
class ClusterReport:
    clusters: list[ClusterMatch]
    unmatched: list[float]
    rel_tol: float

    def cluster(self, value: float) -> ClusterMatch:
        for c in self.clusters:
            if c.value == value:
                return c
        raise KeyError(value)

    def counts(self) -> dict[float, int]:
        return {c.value: c.count for c in self.clusters}

    @property
    def loss_flags(self) -> dict[float, bool]:
        return {c.value: c.loss for c in self.clusters}

    def rows(self) -> list[dict]:
        return [{"lambda": c.value, "multiplicity": c.multiplicity, "matched": c.count,
                 "loss": c.loss, "mean_rel_error": c.mean_rel_error,
                 "max_rel_error": c.max_rel_error} for c in self.clusters]


def match_spectrum(computed, exact: ExactSpectrum, rel_tol: float = 0.15) -> ClusterReport:
    """Assign each computed value to the nearest exact eigenvalue.

    A value is matched when its distance to that eigenvalue is below
    ``rel_tol`` times the eigenvalue (times 1 for the zero eigenvalue).
    """
    if not 0.0 < rel_tol < 0.5:
        raise ValueError("rel_tol must lie in (0, 0.5)")
    computed = np.sort(np.asarray(computed, dtype=float))
    clusters = [ClusterMatch(float(v), int(m)) for v, m in zip(exact.values, exact.multiplicities)]
    unmatched = []
    for x in computed:
        i = int(np.argmin(np.abs(exact.values - x)))
        if abs(x - exact.values[i]) < rel_tol * max(exact.values[i], 1.0):
            clusters[i].matched.append(float(x))
        else:
            unmatched.append(float(x))
    return ClusterReport(clusters, unmatched, rel_tol)


def cluster_error(computed, target: float, rel_tol: float = 0.15) -> float:
    """``|target - min(values matched to target)|``; NaN if none match."""
    computed = np.asarray(computed, dtype=float)
    near = computed[np.abs(computed - target) < rel_tol * max(target, 1.0)]
    return float(abs(target - near.min())) if near.size else float("nan")


@dataclass(frozen=True)
class RateFit:
    """``error ~ C DoF^-rate`` fitted by least squares in log-log scale."""

    rate: float
    intercept: float
    residual: float
    dofs: tuple
    errors: tuple
    note: str = ""


def fit_rate(samples, skip_coarsest: bool = True) -> RateFit:
    """Fit ``r`` in ``|error| ~ DoF^-r`` from ``(dof, error)`` pairs.

    Non-positive or non-finite errors are excluded and reported in
    ``note``.  ``skip_coarsest`` drops the smallest-DoF sample before
    fitting.  At least 3 usable samples are required.
    """
    samples = sorted((float(d), float(e)) for d, e in samples)
    notes = []
    if skip_coarsest and samples:
        notes.append(f"coarsest level (DoF {int(samples[0][0])}) excluded")
        samples = samples[1:]
    good = [(d, e) for d, e in samples if np.isfinite(e) and e > 0]
    if len(good) < len(samples):
        notes.append(f"{len(samples) - len(good)} non-positive error sample(s) excluded")
    if len(good) < 3:
        raise ValueError(f"need >= 3 usable samples for a rate fit, got {len(good)}")
    x = np.log([d for d, _ in good])
    y = np.log([e for _, e in good])
    (slope, intercept), res, *_ = np.polyfit(x, y, 1, full=True)
    residual = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
    return RateFit(float(-slope), float(intercept), residual,
                   tuple(d for d, _ in good), tuple(e for _, e in good), "; ".join(notes))
