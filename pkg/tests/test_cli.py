import csv
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from varifold_lab import cli, mesh_io


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def gen_mesh(capsys, path, *flags):
    code, _, err = run(capsys, "gen", *flags, "-o", str(path), "--report", str(path) + ".json")
    assert code == 0, err
    return path


@pytest.fixture
def sphere_off(tmp_path, capsys):
    return gen_mesh(capsys, tmp_path / "s.off", "--kind", "icosphere", "--subdiv", "4")


def strip_times(rep):
    rep["provenance"].pop("wall_time_s", None)
    return rep


def test_gen_then_energy(sphere_off, capsys):
    code, out, _ = run(capsys, "energy", "-i", str(sphere_off))
    assert code == 0
    rep = json.loads(out)
    assert rep["operation"] == "energy"
    assert rep["results"]["curvature.willmore_energy"]["willmore"] == pytest.approx(4 * math.pi, rel=0.01)
    assert rep["units"]["willmore"].startswith("dimensionless")
    prov = rep["provenance"]
    assert prov["n_vertices"] == 2562 and len(prov["mesh_sha256"]) == 64
    assert prov["backend"] in ("numba", "numpy")


def test_gen_report_has_reference(sphere_off):
    rep = json.loads(open(str(sphere_off) + ".json").read())
    res = rep["results"]
    assert res["zoo.generate"]["euler_characteristic"] == 2
    assert res["zoo.analytic_reference"]["willmore"] == pytest.approx(4 * math.pi)


def test_gen_from_spec_and_no_reference(tmp_path, capsys):
    spec = json.dumps({"kind": "ellipsoid", "params": {"subdiv": 2, "axes": [1, 1, 1.5]}, "seed": None})
    gen_mesh(capsys, tmp_path / "e.obj", "--spec", spec)
    rep = json.loads((tmp_path / "e.obj.json").read_text())
    assert rep["results"]["zoo.analytic_reference"] is None
    assert mesh_io.read_mesh(tmp_path / "e.obj").n_vertices == 162


def test_report_deterministic(sphere_off, capsys):
    a = strip_times(json.loads(run(capsys, "energy", "-i", str(sphere_off))[1]))
    b = strip_times(json.loads(run(capsys, "energy", "-i", str(sphere_off))[1]))
    assert a == b


def test_curvature_csv(sphere_off, tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert run(capsys, "curvature", "-i", str(sphere_off), "-o", str(out))[0] == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 2562
    assert np.median([float(r["H_norm"]) for r in rows]) == pytest.approx(2.0, rel=0.01)


def test_density_point_and_check(sphere_off, capsys):
    code, out, _ = run(capsys, "density", "-i", str(sphere_off), "--vertex", "0")
    assert code == 0
    prof = json.loads(out)["results"]["monotonicity.density_profile"]
    assert prof["limit_estimate"] == pytest.approx(1.0, abs=0.02)
    code, out, _ = run(capsys, "density", "-i", str(sphere_off))
    assert code == 0 and "monotonicity.li_yau_check" in json.loads(out)["results"]


def test_density_csv(sphere_off, capsys):
    code, out, _ = run(capsys, "--format", "csv", "density", "-i", str(sphere_off), "--center", "0,0,1",
                       "--radii", "0.1,0.2,0.4")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "radius,density_ratio,remainder" and len(lines) == 4


def test_invert_far_pole(sphere_off, tmp_path, capsys):
    img = tmp_path / "img.off"
    code, out, _ = run(capsys, "invert", "-i", str(sphere_off), "--pole", "0,0,3", "-o", str(img))
    assert code == 0
    res = json.loads(out)["results"]
    assert res["moebius.verify_inversion_identities"] is not None
    assert mesh_io.read_mesh(img).n_vertices == 2562


def test_rigidity_sphere(sphere_off, tmp_path, capsys):
    corr = tmp_path / "corr.csv"
    code, out, _ = run(capsys, "rigidity", "-i", str(sphere_off), "--correspondence", str(corr))
    assert code == 0
    rep = json.loads(out)["results"]["rigidity.rigidity_pipeline"]
    assert rep["sup_deviation"] <= 1e-2
    assert sum(1 for _ in open(corr)) == 2563


def test_rigidity_sweep_table(sphere_off, capsys):
    code, out, _ = run(capsys, "rigidity", "-i", str(sphere_off), "--sweep", "0.1,0.15,0.2")
    assert code == 0
    table = json.loads(out)["results"]["rigidity.perturbation_sweep"]["empirical_constants"]
    assert [row["eps"] for row in table] == [0.1, 0.15, 0.2]
    vals = [row["sup_deviation/delta"] for row in table]
    assert all(v is not None and v > 0 for v in vals)
    assert max(vals) / min(vals) < 2


def test_rigidity_sweep_below_energy_floor(sphere_off, capsys):
    # at this resolution a small perturbation still has discrete energy below 4 pi
    code, out, _ = run(capsys, "rigidity", "-i", str(sphere_off), "--sweep", "0.025")
    rep = json.loads(out)
    row = rep["results"]["rigidity.perturbation_sweep"]["empirical_constants"][0]
    assert code == 0 and row["delta"] == 0.0 and row["sup_deviation/delta"] is None
    assert any("refine the mesh" in w for w in rep["warnings"])


def test_double_bubble_exit_4(tmp_path, capsys):
    p = gen_mesh(capsys, tmp_path / "b.off", "--kind", "double_bubble", "--resolution", "0.05")
    code, out, err = run(capsys, "rigidity", "-i", str(p))
    assert code == 4 and out == ""
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "HypothesisViolated" and "junction" in payload["message"]


@pytest.mark.parametrize("argv", [
    ["energy", "-i", "/nonexistent/mesh.off"],
    ["gen", "--kind", "klein_bottle", "-o", "x.off"],
    ["gen", "--kind", "torus", "--R", "0.5", "-o", "x.off"],
    ["frobnicate"],
    ["bochner", "--h", "0.3"],
    ["suite", "--filter", "nothing_matches_this"],
])
def test_exit_2(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1])["exit_code"] == 2


def test_invert_needs_one_pole(sphere_off, capsys):
    assert run(capsys, "invert", "-i", str(sphere_off))[0] == 2
    assert run(capsys, "invert", "-i", str(sphere_off), "--vertex", "99999")[0] == 2


def test_bochner_command(tmp_path, capsys):
    fcsv = tmp_path / "f.csv"
    code, out, _ = run(capsys, "bochner", "--chart", "plane", "--scale", "2", "--h", "0.125", "--field-csv", str(fcsv))
    assert code == 0
    rep = json.loads(out)["results"]["bochner.bochner_analysis"]
    assert rep["residual_l1"] <= 1e-12
    assert sum(1 for _ in open(fcsv)) == 33 * 33 + 1


def test_suite_filter_runs_one_criterion(capsys):
    code, out, _ = run(capsys, "suite", "--quick", "--filter", "bochner")
    lines = [ln for ln in out.splitlines() if ln.startswith("[")]
    assert code == 0 and len(lines) == 1 and lines[0].startswith("[PASS] C9")
    assert "1/1 criteria passed" in out


def test_console_script_numpy_backend(sphere_off):
    env = dict(os.environ, VARIFOLD_LAB_NO_NUMBA="1")
    proc = subprocess.run([sys.executable, "-m", "varifold_lab.cli", "energy", "-i", str(sphere_off)],
                          capture_output=True, text=True, env=env, timeout=300)
    assert proc.returncode == 0, proc.stderr
    rep = json.loads(proc.stdout)
    assert rep["provenance"]["backend"] == "numpy"
    assert rep["results"]["curvature.willmore_energy"]["willmore"] == pytest.approx(4 * math.pi, rel=0.01)


def test_version(capsys):
    assert run(capsys, "--version")[0] == 0
