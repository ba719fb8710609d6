import csv
import json

import numpy as np
import pytest

from surfeig.cli import (ConfigError, ExperimentConfig, REPORT_VERSION, main,
                         parse_config_text)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_config_defaults_and_echo():
    cfg = ExperimentConfig.from_text("solver = bfmg  # comment\nsmoother = kaczmarz(5)\n")
    assert cfg.solver == "bfmg" and str(cfg.method) == "kaczmarz(5)"
    assert cfg.levels == 5 and cfg.targets == (2.0, 6.0, 12.0)
    again = ExperimentConfig.from_text(cfg.echo())
    assert again.raw == cfg.raw


@pytest.mark.parametrize("text", ["levels = 0", "nope = 1", "solver = lanczos", "levels",
                                  "smoother = kaczmarz(-1)", "rel_tol = 0.7",
                                  "enrichment = window", "levels = 2\nlevels = 3"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text(text)


def test_enrichment_policies():
    cfg = ExperimentConfig.from_text("enrichment = window\nenrichment_target = 37\n"
                                     "enrichment_dim = 12\n")
    assert (cfg.policy.target, cfg.policy.size) == (36, 12)
    assert str(ExperimentConfig.from_text("enrichment = largest17").policy) == "largest(17)"
    fixed = ExperimentConfig.from_text("enrichment = fixed\nenrichment_target = 37\n").policy
    assert fixed.indices == (36,)


def test_mesh_command(tmp_path):
    cfg = write(tmp_path, "m.cfg", "mesh = octahedron\nlevels = 3\n")
    assert main(["mesh", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "mesh_stats.csv")
    assert [int(r["dof"]) for r in rows] == [6, 18, 66]
    h = [float(r["h_max"]) for r in rows]
    assert h[0] > h[1] > h[2]
    assert sorted(p.name for p in (tmp_path / "o").glob("*.off")) == [
        "level_0.off", "level_1.off", "level_2.off"]


def test_mesh_bad_face(tmp_path, capsys):
    off = write(tmp_path, "bad.off", "OFF\n3 1 0\n0 0 1\n0 1 0\n1 0 0\n3 0 1 7\n")
    cfg = write(tmp_path, "b.cfg", f"mesh = file:{off}\nlevels = 2\n")
    assert main(["mesh", "--config", cfg, "--out", str(tmp_path / "o")]) == 4
    assert "line 6" in capsys.readouterr().err


def test_missing_config_is_io_error(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == 4


def test_bad_config_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, "c.cfg", "solver = lanczos\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "error [config]" in capsys.readouterr().err


def test_numerical_failure_names_stage(tmp_path, capsys):
    cfg = write(tmp_path, "n.cfg", "mesh = octahedron\nlevels = 2\nsolver = bfmg\n"
                "enrichment = fixed\nenrichment_target = 500\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "error [solve/bfmg]" in capsys.readouterr().err


def test_unknown_subcommand():
    assert main(["bogus"]) == 2


def test_single_level_baseline(tmp_path):
    cfg = write(tmp_path, "k1.cfg", "mesh = icosahedron\nlevels = 1\nsolver = bfmg\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert any("baseline" in n for n in rep["notes"])
    vals = rep["levels"][0]["values"]
    assert abs(vals[0]) < 1e-12 and len(rep["levels"]) == 1


SMALL = "mesh = icosahedron\nbase_refinements = 1\nlevels = 4\ncount = 16\n"


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    out = {}
    for label, extra in [("tg", "solver = cascade-tg\n"),
                         ("tgk", "solver = cascade-tg\nsmoother = kaczmarz(5)\n"),
                         ("bmg", "solver = bfmg\n"),
                         ("bmggs", "solver = bfmg\nsmoother = gauss_seidel(1)\n")]:
        cfg = base / f"{label}.cfg"
        cfg.write_text(SMALL + f"label = {label}\n" + extra)
        assert main(["solve", "--config", str(cfg), "--out", str(base / label),
                     "--threads", "1"]) == 0
        out[label] = base / label
    return out


def test_solve_outputs(solved):
    d = solved["tg"]
    for name in ("report.json", "eigenvalues.csv", "rates.csv", "clusters.csv",
                 "estimator.csv", "errors.csv", "spectrum.svg", "convergence.svg",
                 "config.echo.txt"):
        assert (d / name).exists(), name
    rates = read_csv(d / "rates.csv")
    assert [float(r["lambda"]) for r in rates] == [2.0, 6.0, 12.0]
    assert all(0.8 < float(r["rate"]) < 1.2 for r in rates)
    rep = json.loads((d / "report.json").read_text())
    assert rep["version"] == REPORT_VERSION and rep["config"]["solver"] == "cascade-tg"
    assert [lv["dof"] for lv in rep["levels"]] == [42, 162, 642, 2562]


def test_echoed_config_reproduces(solved, tmp_path):
    d = solved["bmggs"]
    assert main(["solve", "--config", str(d / "config.echo.txt"), "--out",
                 str(tmp_path / "again"), "--threads", "1"]) == 0
    for name in ("eigenvalues.csv", "rates.csv", "clusters.csv", "estimator.csv", "errors.csv"):
        assert (tmp_path / "again" / name).read_bytes() == (d / name).read_bytes(), name


def test_dump_matrices(tmp_path):
    cfg = write(tmp_path, "d.cfg", "mesh = octahedron\nlevels = 2\nsolver = direct\ncount = 4\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o"), "--dump-matrices"]) == 0
    names = sorted(p.name for p in (tmp_path / "o").glob("*.mtx"))
    assert names == ["mass_level0.mtx", "mass_level1.mtx", "prolongation_0_1.mtx",
                     "stiffness_level0.mtx", "stiffness_level1.mtx"]
    from surfeig.linalg import read_matrix_market
    P = read_matrix_market(tmp_path / "o" / "prolongation_0_1.mtx")
    assert P.shape == (18, 6)


def test_report_merges_columns(solved, tmp_path):
    reports = [str(solved[k] / "report.json") for k in ("tg", "tgk", "bmg", "bmggs")]
    assert main(["report", "--out", str(tmp_path / "r"), *reports]) == 0
    rows = read_csv(tmp_path / "r" / "rate_table.csv")
    assert list(rows[0]) == ["lambda", "tg", "tgk", "bmg", "bmggs"]
    assert len(rows) == 3
    assert (tmp_path / "r" / "rate_table.svg").exists()
    assert main(["report", "--out", str(tmp_path / "s"), reports[0]]) == 0
    assert list(read_csv(tmp_path / "s" / "rate_table.csv")[0]) == ["lambda", "tg"]


def test_report_errors(solved, tmp_path):
    assert main(["report", "--out", str(tmp_path / "r")]) == 2
    rep = json.loads((solved["tg"] / "report.json").read_text())
    rep["version"] = REPORT_VERSION + 1
    bad = write(tmp_path, "old.json", json.dumps(rep))
    assert main(["report", "--out", str(tmp_path / "r"), bad]) == 2
    assert main(["report", "--out", str(tmp_path / "r"), str(tmp_path / "none.json")]) == 4
