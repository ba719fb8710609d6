"""Batch experiment driver: ``surfeig mesh|solve|report``.

Configs are flat ``key = value`` text files (``#`` starts a comment).
Keys and defaults are listed in :data:`DEFAULTS`; the README documents
each one.  Every plot is accompanied by the CSV holding its data, and
CSV files never contain timings, so single-threaded reruns are
byte-identical.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .eigensolver import (DIRECT, BmgConfig, EigenSet, EigensolverError,
                          EnrichmentPolicy, SourceMethod, bmg_init, bmg_vcycle,
                          cascade_two_grid, coarse_eigensolve, lowest_eigenpairs,
                          two_grid)
from .estimator import estimator_breakdown
from .hierarchy import Hierarchy
from .linalg import write_matrix_market
from .mesh import (MeshError, MeshFormatError, TriMesh, load_mesh, make_fibonacci_sphere,
                   make_icosahedron, make_octahedron, mesh_stats, project_to_sphere,
                   refine, save_mesh)
from .plotting import Figure, Series
from .validation import cluster_error, fit_rate, match_spectrum, sphere_spectrum

REPORT_FORMAT = "surfeig-report"
REPORT_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

DEFAULTS = {
    "label": "",
    "mesh": "fibonacci:54",
    "base_refinements": "0",
    "levels": "5",
    "solver": "cascade-tg",
    "smoother": "direct",
    "shift": "0",
    "shift_update": "auto",
    "enrichment": "spectrum20",
    "enrichment_dim": "",
    "enrichment_target": "",
    "enrichment_tol": "",
    "count": "16",
    "targets": "2,6,12",
    "rel_tol": "0.15",
    "fit_skip_coarsest": "true",
    "estimator": "true",
    "coarse_block": "galerkin",
    "deflate": "true",
    "seed": "none",
}

# presets named after the reference experiments (dimensions 20, 17, 15, 6)
ENRICHMENT_PRESETS = {
    "spectrum20": lambda: EnrichmentPolicy.near_shift(size=20, tol=math.inf),
    "largest17": lambda: EnrichmentPolicy.largest(17),
    "window15": lambda: EnrichmentPolicy.fixed(range(19, 34)),
    "lowest6": lambda: EnrichmentPolicy.fixed(range(6)),
}

SOLVERS = ("direct", "tg", "cascade-tg", "bmg", "bfmg")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """Failure tagged with the pipeline stage and the exit code to use."""

    def __init__(self, stage: str, message: str, code: int):
        super().__init__(message)
        self.stage, self.code = stage, code


# --- config -------------------------------------------------------------------

def parse_config_text(text: str) -> dict[str, str]:
    raw = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {no}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {no}: duplicate key {key!r}")
        raw[key] = value
    return {**DEFAULTS, **raw}


def _bool(key, value):
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _int(key, value, minimum=None):
    try:
        out = int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
    if minimum is not None and out < minimum:
        raise ConfigError(f"{key}: must be >= {minimum}, got {out}")
    return out


def _float(key, value):
    try:
        out = float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if math.isnan(out):
        raise ConfigError(f"{key}: NaN is not allowed")
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    label: str
    mesh: str
    base_refinements: int
    levels: int
    solver: str
    method: SourceMethod
    shift: float
    shift_update: str
    policy: EnrichmentPolicy
    count: int
    targets: tuple
    rel_tol: float
    fit_skip_coarsest: bool
    estimator: bool
    coarse_block: str
    deflate: bool
    seed: int | None

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(parse_config_text(text))

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = {**DEFAULTS, **raw}
        solver = raw["solver"].lower()
        if solver not in SOLVERS:
            raise ConfigError(f"solver: expected one of {', '.join(SOLVERS)}, got {solver!r}")
        try:
            method = SourceMethod.parse(raw["smoother"])
        except ValueError as exc:
            raise ConfigError(f"smoother: {exc}") from None
        if raw["shift_update"] not in ("auto", "fixed", "average"):
            raise ConfigError("shift_update: expected 'auto', 'fixed' or 'average'")
        if raw["coarse_block"] not in ("galerkin", "assembled"):
            raise ConfigError("coarse_block: expected 'galerkin' or 'assembled'")
        try:
            targets = tuple(float(t) for t in raw["targets"].split(",") if t.strip())
        except ValueError:
            raise ConfigError(f"targets: expected comma-separated numbers, got {raw['targets']!r}") from None
        rel_tol = _float("rel_tol", raw["rel_tol"])
        if not 0.0 < rel_tol < 0.5:
            raise ConfigError("rel_tol: must lie in (0, 0.5)")
        seed = None if raw["seed"].lower() == "none" else _int("seed", raw["seed"])
        return cls(raw=dict(raw), label=raw["label"], mesh=raw["mesh"],
                   base_refinements=_int("base_refinements", raw["base_refinements"], 0),
                   levels=_int("levels", raw["levels"], 1), solver=solver, method=method,
                   shift=_float("shift", raw["shift"]), shift_update=raw["shift_update"],
                   policy=_policy(raw), count=_int("count", raw["count"], 1),
                   targets=targets, rel_tol=rel_tol,
                   fit_skip_coarsest=_bool("fit_skip_coarsest", raw["fit_skip_coarsest"]),
                   estimator=_bool("estimator", raw["estimator"]),
                   coarse_block=raw["coarse_block"], deflate=_bool("deflate", raw["deflate"]),
                   seed=seed)

    def echo(self) -> str:
        """Config text that reproduces this experiment."""
        return "".join(f"{k} = {self.raw[k]}\n" for k in DEFAULTS)


def _policy(raw) -> EnrichmentPolicy:
    name = raw["enrichment"].lower()
    dim = _int("enrichment_dim", raw["enrichment_dim"], 0) if raw["enrichment_dim"] else None
    if name in ENRICHMENT_PRESETS:
        return ENRICHMENT_PRESETS[name]()
    try:
        if name == "window":
            if not raw["enrichment_target"] or not dim:
                raise ConfigError("window enrichment needs enrichment_target and enrichment_dim")
            # enrichment_target is 1-based like the eigenvalue numbering in reports
            target = _int("enrichment_target", raw["enrichment_target"], 1) - 1
            return EnrichmentPolicy.window(target, dim)
        if name == "largest":
            return EnrichmentPolicy.largest(dim or 0)
        if name == "near_shift":
            tol = raw["enrichment_tol"]
            tol = None if tol in ("", "auto") else _float("enrichment_tol", tol)
            return EnrichmentPolicy.near_shift(size=dim, tol=tol)
        if name == "fixed":
            idx = [_int("enrichment_target", t, 1) - 1
                   for t in raw["enrichment_target"].split(",") if t.strip()]
            if not idx:
                raise ConfigError("fixed enrichment needs enrichment_target (1-based list)")
            return EnrichmentPolicy.fixed(idx)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"enrichment: {exc}") from None
    raise ConfigError(f"enrichment: unknown policy or preset {name!r}")


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise StageError("config", f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None
    try:
        return ExperimentConfig.from_text(text)
    except ConfigError as exc:
        raise StageError("config", f"{path}: {exc}", EXIT_CONFIG) from None


# --- meshes -------------------------------------------------------------------

def base_mesh(spec: str, base_refinements: int = 0) -> TriMesh:
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "octahedron":
        mesh = make_octahedron()
    elif kind == "icosahedron":
        mesh = make_icosahedron()
    elif kind == "fibonacci":
        n = _int("mesh", arg or "54", 4)
        mesh = make_fibonacci_sphere(n)
    elif kind == "file":
        if not arg:
            raise ConfigError("mesh: 'file:' needs a path")
        mesh = load_mesh(arg, projector=project_to_sphere)
    else:
        raise ConfigError(f"mesh: unknown source {spec!r}")
    for _ in range(base_refinements):
        mesh = refine(mesh)
    return mesh


def build_hierarchy(cfg: ExperimentConfig) -> Hierarchy:
    try:
        mesh = base_mesh(cfg.mesh, cfg.base_refinements)
    except ConfigError as exc:
        raise StageError("config", str(exc), EXIT_CONFIG) from None
    except MeshFormatError as exc:
        raise StageError("mesh", str(exc), EXIT_IO) from None
    except OSError as exc:
        raise StageError("mesh", f"cannot read mesh: {exc.strerror or exc}", EXIT_IO) from None
    except MeshError as exc:
        raise StageError("mesh", str(exc), EXIT_NUMERIC) from None
    try:
        return Hierarchy.build(mesh, cfg.levels)
    except (MeshError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageError("assembly", str(exc), EXIT_NUMERIC) from None


# --- pipelines ------------------------------------------------------------------

@dataclass
class LevelResult:
    level: int
    dof: int
    values: np.ndarray        # ascending absolute eigenvalue approximations
    vectors: np.ndarray       # nodal values on that level, one column per value
    seconds: float


def _sorted(values, vectors):
    order = np.argsort(values, kind="stable")
    return np.asarray(values)[order], np.asarray(vectors)[:, order]


def _from_eigset(level, dof, eigs: EigenSet, seconds):
    return LevelResult(level, dof, *_sorted(eigs.absolute, eigs.vectors), seconds)


def run_pipeline(cfg: ExperimentConfig, h: Hierarchy) -> tuple[list[LevelResult], list[str]]:
    """Run the configured solver; returns per-level results and report notes."""
    notes = []
    count = min(cfg.count, h.dofs[0])
    if cfg.levels == 1 or cfg.solver == "direct":
        if cfg.levels == 1 and cfg.solver != "direct":
            notes.append("single level: direct eigensolve baseline only")
        out = []
        for k in range(h.num_levels):
            t0 = time.perf_counter()
            eigs = lowest_eigenpairs(h.forms[k], count, level=k)
            out.append(_from_eigset(k, h.dofs[k], eigs, time.perf_counter() - t0))
        return out, notes

    if cfg.solver in ("tg", "cascade-tg"):
        indices = np.arange(count)
        t0 = time.perf_counter()
        coarse = coarse_eigensolve(h.forms[0], cfg.shift, count=count)
        out = [_from_eigset(0, h.dofs[0], coarse, time.perf_counter() - t0)]
        if cfg.solver == "tg":
            for k in range(1, h.num_levels):
                t0 = time.perf_counter()
                P = h.P(0, k)
                values = np.empty(count)
                vectors = np.empty((h.dofs[k], count))
                for j in indices:
                    basis = vectors[:, :j] if cfg.deflate and j > 0 else None
                    values[j], vectors[:, j] = two_grid(coarse, j, h.forms[k], P, cfg.method,
                                                        deflate=basis, level=k)
                out.append(LevelResult(k, h.dofs[k], *_sorted(values, vectors),
                                       time.perf_counter() - t0))
        else:
            clock = [time.perf_counter()]

            def record(k, eigs):
                if k > 0:
                    out.append(_from_eigset(k, h.dofs[k], eigs, time.perf_counter() - clock[0]))
                clock[0] = time.perf_counter()

            cascade_two_grid(h, cfg.shift, method=cfg.method, indices=indices,
                             deflate=cfg.deflate, callback=record)
        return out, notes

    # bootstrap pipelines: "bmg" and "bfmg" both run V-cycles of increasing depth
    bcfg = BmgConfig(cfg.shift, cfg.policy, cfg.method, shift_update=cfg.shift_update,
                     coarse_block=cfg.coarse_block, deflate=cfg.deflate)
    t0 = time.perf_counter()
    state = bmg_init(h, bcfg)
    coarse = coarse_eigensolve(h.forms[0], 0.0, count=count)
    out = [_from_eigset(0, h.dofs[0], coarse, time.perf_counter() - t0)]
    for k in range(1, h.num_levels):
        bmg_vcycle(state, k)
        rec = state.history[-1]
        out.append(_from_eigset(k, h.dofs[k], state.ritz, rec["seconds"]))
        notes.append(f"cycle {k}: shift {rec['shift_in']!r} -> {rec['shift_out']!r}, "
                     f"enrichment {len(rec['indices'])}, deflated {rec['deflated']}, "
                     f"dropped {len(rec['dropped'])}")
    notes.append(f"enrichment policy {cfg.policy}; enriched top-left block {cfg.coarse_block}")
    return out, notes


# --- outputs ---------------------------------------------------------------------

def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def analyse(cfg: ExperimentConfig, h: Hierarchy, results: list[LevelResult]) -> dict:
    """Cluster reports, per-level errors, rate fits and estimator values."""
    top = max(float(results[-1].values.max()), max(cfg.targets, default=0.0))
    lmax = int(math.ceil(math.sqrt(top + 0.25))) + 1
    exact = sphere_spectrum(lmax)
    clusters = []
    for r in results:
        report = match_spectrum(r.values, exact, cfg.rel_tol)
        clusters.extend({"level": r.level, "dof": r.dof, **row} for row in report.rows()
                        if row["matched"] or row["lambda"] <= top)
    errors, rates, estimates = [], [], []
    for lam in cfg.targets:
        samples = []
        for r in results:
            e = cluster_error(r.values, lam, cfg.rel_tol)
            errors.append({"level": r.level, "dof": r.dof, "lambda": lam, "error": e})
            samples.append((r.dof, e))
        try:
            fit = fit_rate(samples, skip_coarsest=cfg.fit_skip_coarsest)
            rates.append({"lambda": lam, "rate": fit.rate, "intercept": fit.intercept,
                          "residual": fit.residual, "samples": len(fit.dofs), "note": fit.note})
        except ValueError as exc:
            rates.append({"lambda": lam, "rate": float("nan"), "intercept": float("nan"),
                          "residual": float("nan"), "samples": 0, "note": str(exc)})
        if cfg.estimator:
            for r in results:
                near = np.abs(r.values - lam) < cfg.rel_tol * max(lam, 1.0)
                if not near.any():
                    continue
                j = int(np.flatnonzero(near)[np.argmin(r.values[near])])
                b = estimator_breakdown(h.meshes[r.level], r.vectors[:, j], r.values[j])
                estimates.append({"level": r.level, "dof": r.dof, "lambda": lam,
                                  "value": float(r.values[j]), "eta": b.total,
                                  "volume": float(np.sqrt(b.volume.sum())),
                                  "jump": float(np.sqrt(b.jump.sum())),
                                  "geometric": float(np.sqrt(b.geometric.sum()))})
    return {"exact": exact, "clusters": clusters, "errors": errors, "rates": rates,
            "estimator": estimates}


def write_outputs(cfg, h, results, analysis, notes, timings, out: Path, dump: bool):
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "eigenvalues.csv", ["level", "dof", "index", "value"],
               [(r.level, r.dof, i + 1, _fmt(v)) for r in results for i, v in enumerate(r.values)])
    _write_csv(out / "errors.csv", ["level", "dof", "lambda", "error"],
               [tuple(_fmt(e[k]) for k in ("level", "dof", "lambda", "error"))
                for e in analysis["errors"]])
    rate_keys = ("lambda", "rate", "intercept", "residual", "samples", "note")
    _write_csv(out / "rates.csv", rate_keys,
               [tuple(_fmt(r[k]) for k in rate_keys) for r in analysis["rates"]])
    cl_keys = ("level", "dof", "lambda", "multiplicity", "matched", "loss",
               "mean_rel_error", "max_rel_error")
    _write_csv(out / "clusters.csv", cl_keys,
               [tuple(_fmt(c[k]) for k in cl_keys) for c in analysis["clusters"]])
    if cfg.estimator:
        est_keys = ("level", "dof", "lambda", "value", "eta", "volume", "jump", "geometric")
        _write_csv(out / "estimator.csv", est_keys,
                   [tuple(_fmt(e[k]) for k in est_keys) for e in analysis["estimator"]])

    finest = results[-1]
    exact_vals = analysis["exact"].expanded()[:len(finest.values)]
    fig = Figure(title=f"spectrum on level {finest.level} ({finest.dof} DoF)",
                 xlabel="index", ylabel="eigenvalue")
    fig.add(Series("exact", list(range(1, len(exact_vals) + 1)), list(exact_vals),
                   color="#d62728", radius=3.5))
    fig.add(Series("computed", list(range(1, len(finest.values) + 1)), list(finest.values),
                   color="#1f5fbf"))
    fig.save(out / "spectrum.svg")

    conv = Figure(title="eigenvalue error", xlabel="DoF", ylabel="error", logx=True, logy=True)
    for lam in cfg.targets:
        pts = [e for e in analysis["errors"] if e["lambda"] == lam]
        conv.add(Series(f"lambda={lam:g}", [e["dof"] for e in pts], [e["error"] for e in pts],
                        line=True))
    conv.save(out / "convergence.svg")

    if dump:
        for k, forms in enumerate(h.forms):
            write_matrix_market(out / f"stiffness_level{k}.mtx", forms.stiffness)
            write_matrix_market(out / f"mass_level{k}.mtx", forms.mass)
        for k, p in enumerate(h.prolongations):
            write_matrix_market(out / f"prolongation_{k}_{k + 1}.mtx", p.matrix, symmetric=False)

    (out / "config.echo.txt").write_text(cfg.echo())
    report = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "package_version": __version__,
        "label": cfg.label or f"{cfg.solver}+{cfg.method}",
        "config": {k: cfg.raw[k] for k in DEFAULTS},
        "levels": [{"level": r.level, "dof": r.dof, "values": r.values.tolist(),
                    "seconds": r.seconds} for r in results],
        "rates": analysis["rates"],
        "clusters": analysis["clusters"],
        "estimator": analysis["estimator"],
        "notes": notes,
        "timings": timings,
    }
    (out / "report.json").write_text(json.dumps(report, indent=1, default=_json_default) + "\n")
    return report


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(type(x))


STANDING_NOTES = [
    "Gauss-Seidel smoothing is symmetric (forward then backward sweep); Kaczmarz is forward",
    "enrichment vectors are orthonormalized by modified Gram-Schmidt in the mass inner product",
    "two-grid results are Rayleigh quotients of the fine-level source solution",
]


# --- commands ---------------------------------------------------------------------

def cmd_mesh(cfg: ExperimentConfig, out: Path) -> int:
    h_meshes = build_hierarchy_meshes(cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
        rows = []
        for k, m in enumerate(h_meshes):
            save_mesh(m, out / f"level_{k}.off")
            s = mesh_stats(m)
            rows.append((k, m.num_vertices, m.num_triangles, _fmt(s.h_max), _fmt(s.h_min),
                         _fmt(s.total_area), _fmt(s.min_quality)))
        _write_csv(out / "mesh_stats.csv", ["level", "dof", "triangles", "h_max", "h_min",
                                            "total_area", "min_quality"], rows)
    except OSError as exc:
        raise StageError("output", f"{exc.strerror or exc}: {exc.filename or out}", EXIT_IO) from None
    print(f"wrote {len(h_meshes)} meshes to {out}")
    return EXIT_OK


def build_hierarchy_meshes(cfg: ExperimentConfig) -> list[TriMesh]:
    try:
        mesh = base_mesh(cfg.mesh, cfg.base_refinements)
    except ConfigError as exc:
        raise StageError("config", str(exc), EXIT_CONFIG) from None
    except MeshFormatError as exc:
        raise StageError("mesh", str(exc), EXIT_IO) from None
    except OSError as exc:
        raise StageError("mesh", f"cannot read mesh: {exc.strerror or exc}", EXIT_IO) from None
    except MeshError as exc:
        raise StageError("mesh", str(exc), EXIT_NUMERIC) from None
    meshes = [mesh]
    for _ in range(cfg.levels - 1):
        meshes.append(refine(meshes[-1]))
    return meshes


def cmd_solve(cfg: ExperimentConfig, out: Path, dump: bool = False) -> int:
    t0 = time.perf_counter()
    h = build_hierarchy(cfg)
    t1 = time.perf_counter()
    try:
        results, notes = run_pipeline(cfg, h)
    except (EigensolverError, np.linalg.LinAlgError, ArithmeticError) as exc:
        raise StageError(f"solve/{cfg.solver}", f"{type(exc).__name__}: {exc}", EXIT_NUMERIC) from None
    except ValueError as exc:
        raise StageError(f"solve/{cfg.solver}", str(exc), EXIT_NUMERIC) from None
    t2 = time.perf_counter()
    try:
        analysis = analyse(cfg, h, results)
    except (MeshError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageError("analysis", str(exc), EXIT_NUMERIC) from None
    t3 = time.perf_counter()
    timings = {"hierarchy": t1 - t0, "solve": t2 - t1, "analysis": t3 - t2}
    try:
        write_outputs(cfg, h, results, analysis, STANDING_NOTES + notes, timings, out, dump)
    except OSError as exc:
        raise StageError("output", f"{exc.strerror or exc}: {exc.filename or out}", EXIT_IO) from None
    for r in analysis["rates"]:
        print(f"lambda={r['lambda']:g} rate={r['rate']:.4f}")
    return EXIT_OK


def load_report(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise StageError("report", f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None
    except json.JSONDecodeError as exc:
        raise StageError("report", f"{path}: not a report ({exc})", EXIT_IO) from None
    if not isinstance(data, dict) or data.get("format") != REPORT_FORMAT:
        raise StageError("report", f"{path}: not a {REPORT_FORMAT} file", EXIT_CONFIG)
    if data.get("version") != REPORT_VERSION:
        raise StageError("report", f"{path}: incompatible report version {data.get('version')!r} "
                         f"(expected {REPORT_VERSION})", EXIT_CONFIG)
    return data


def cmd_report(paths: list[str], out: Path) -> int:
    if not paths:
        raise StageError("report", "no report files given", EXIT_CONFIG)
    reports = [load_report(p) for p in paths]
    labels = []
    for rep in reports:
        label = rep.get("label") or "report"
        while label in labels:
            label += "'"
        labels.append(label)
    lambdas = sorted({r["lambda"] for rep in reports for r in rep["rates"]})
    table = {lab: {r["lambda"]: r["rate"] for r in rep["rates"]} for lab, rep in zip(labels, reports)}
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "rate_table.csv", ["lambda", *labels],
                   [(_fmt(float(lam)), *(_fmt(float(table[lab].get(lam, float("nan"))))
                                          for lab in labels)) for lam in lambdas])
        fig = Figure(title="fitted convergence rates", xlabel="eigenvalue", ylabel="rate")
        for lab in labels:
            fig.add(Series(lab, lambdas, [table[lab].get(lam, float("nan")) for lam in lambdas],
                           line=True))
        fig.save(out / "rate_table.svg")
    except OSError as exc:
        raise StageError("output", f"{exc.strerror or exc}: {exc.filename or out}", EXIT_IO) from None
    print(f"merged {len(reports)} report(s) into {out / 'rate_table.csv'}")
    return EXIT_OK


# --- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surfeig", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"surfeig {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("mesh", "generate or load a mesh hierarchy"),
                           ("solve", "run an eigenvalue experiment")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="BLAS/LAPACK thread limit")
        if name == "solve":
            p.add_argument("--dump-matrices", action="store_true",
                           help="write stiffness, mass and prolongation matrices (Matrix Market)")
    p = sub.add_parser("report", help="merge solve reports into rate tables")
    p.add_argument("reports", nargs="*", help="report.json files written by 'solve'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None, help="accepted for symmetry, unused")
    return parser


def _thread_limit(n: int | None):
    if n is None:
        return nullcontext()
    if n < 1:
        raise StageError("config", "--threads must be >= 1", EXIT_CONFIG)
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        with _thread_limit(args.threads):
            if args.command == "report":
                return cmd_report(args.reports, Path(args.out))
            cfg = load_config(args.config)
            if cfg.seed is not None:
                np.random.seed(cfg.seed)
            if args.command == "mesh":
                return cmd_mesh(cfg, Path(args.out))
            return cmd_solve(cfg, Path(args.out), dump=args.dump_matrices)
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
