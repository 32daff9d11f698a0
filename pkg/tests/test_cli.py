import json
import math
import subprocess
import sys

import jsonschema
import pytest

from fltc.cli import report_schema, run


def _report(path):
    return json.loads((path / "report.json").read_text())


def test_eigen_rectangle_values(tmp_path):
    assert run(["eigen", "--domain", "rectangle", "--beta", "1,1", "--count", "4", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "eigenvalues.csv").read_bytes().decode().split("\n")
    assert lines[0] == "index,lambda,multiplicity" and lines[-1] == ""
    lams = [float(l.split(",")[1]) for l in lines[1:-1]]
    pi2 = math.pi ** 2
    assert lams == pytest.approx([0.0, pi2, pi2, 2 * pi2], abs=1e-12)
    assert [int(l.split(",")[2]) for l in lines[1:-1]] == [1, 2, 2, 1]
    assert lines[2].split(",")[1] == format(pi2, ".17g")


def test_eigen_annulus_contours_and_manifest(tmp_path):
    argv = ["eigen", "--domain", "annulus", "--r0", "0.3", "--R", "1", "--count", "12", "--grid", "101",
            "--out", str(tmp_path)]
    assert run(argv) == 0
    contours = sorted(p.name for p in tmp_path.glob("eigen_*.csv"))
    assert len(contours) == 12
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    listed = set(manifest["files"])
    assert set(contours) <= listed and "eigenvalues.csv" in listed and "report.json" in listed
    for name in listed:
        assert (tmp_path / name).exists()
    assert "timestamp" in manifest
    assert "timestamp" not in (tmp_path / "report.json").read_text()


def test_maximizers_disk_is_a_finding(tmp_path, capsys):
    assert run(["maximizers", "--domain", "disk", "--count", "20", "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path)
    assert rep["results"]["exists"] is False
    assert len(rep["results"]["witness_pair"]) == 2
    assert rep["diagnostics"]["findings"]
    assert "finding:" in capsys.readouterr().out


def test_axioms_rectangle(tmp_path):
    argv = ["axioms", "--domain", "rectangle", "--beta", "1,2", "--grid", "21", "--times", "0.1,0.2",
            "--out", str(tmp_path)]
    assert run(argv) == 0
    res = _report(tmp_path)["results"]
    assert res["all_passed"]
    assert max(res["deviations"].values()) < 1e-6


def test_simulate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--seed", "7", "--out", str(a)]) == 0
    assert run(["simulate", "--seed", "7", "--out", str(b)]) == 0
    assert (a / "paths.csv").read_bytes() == (b / "paths.csv").read_bytes()
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    c = tmp_path / "c"
    assert run(["simulate", "--seed", "8", "--out", str(c)]) == 0
    assert (a / "paths.csv").read_bytes() != (c / "paths.csv").read_bytes()


def test_convolve_two_point_law(tmp_path):
    argv = ["convolve", "--beta", "1", "--grid", "21", "--x", "0.3", "--y", "0.4", "--save-table",
            "--out", str(tmp_path)]
    assert run(argv) == 0
    assert (tmp_path / "table.json").exists()
    body = (tmp_path / "convolution.csv").read_text()
    assert "\r" not in body


def test_config_file_matches_flags(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"command": "simulate", "seed": 7, "paths": 3,
                               "out": str(tmp_path / "cfg")}))
    assert run(["--config", str(cfg)]) == 0
    assert run(["simulate", "--seed", "7", "--paths", "3", "--out", str(tmp_path / "flags")]) == 0
    assert (tmp_path / "cfg" / "paths.csv").read_bytes() == (tmp_path / "flags" / "paths.csv").read_bytes()


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("FLTC_OUTPUT_ROOT", str(tmp_path))
    assert run(["eigen", "--domain", "rectangle", "--beta", "1", "--count", "3"]) == 0
    assert (tmp_path / "eigen" / "eigenvalues.csv").exists()


@pytest.mark.parametrize("argv", [
    ["eigen", "--count", "0"],
    ["kernel-scan", "--times", "a,b"],
    ["axioms", "--tol", "-1"],
    ["frobnicate"],
])
def test_operational_errors_exit_nonzero(tmp_path, argv):
    assert run(argv + ["--out", str(tmp_path)]) != 0


def test_unknown_config_keys_rejected(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"command": "eigen", "colour": "blue"}))
    assert run(["--config", str(cfg)]) == 2
    cfg.write_text("{not json")
    assert run(["--config", str(cfg)]) == 2


def test_reports_validate_against_schema(tmp_path):
    assert run(["kernel-scan", "--beta", "1", "--grid", "21", "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path)
    jsonschema.validate(rep, report_schema())
    bad = dict(rep, extra=1)
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(bad, report_schema())


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fltc", "eigen", "--beta", "1", "--count", "2",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
