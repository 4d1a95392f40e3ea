import csv
import json
import subprocess
import sys

import pytest

from sdde_lindstedt.cli import main, run, validate_manifest
from sdde_lindstedt.errors import ManifestError
from sdde_lindstedt.models import catalog
from sdde_lindstedt.oracle import fit_order


def artifacts(out):
    res = json.loads((out / "result.json").read_text())
    rows = list(csv.reader(open(out / "residuals.csv")))
    return res, rows, (out / "report.txt").read_text()


def test_validate_rejects_unknown_and_bad_values():
    with pytest.raises(ManifestError):
        validate_manifest({"command": "catalog", "colour": 1})
    with pytest.raises(ManifestError):
        validate_manifest({"command": "expand", "model": "quartic", "N": -1})
    with pytest.raises(ManifestError):
        validate_manifest({"command": "expand"})
    assert validate_manifest({"command": "catalog"})["command"] == "catalog"


def test_catalog(tmp_path):
    assert run({"command": "catalog"}, str(tmp_path)) == 0
    res, rows, report = artifacts(tmp_path)
    assert [m["id"] for m in res["models"]] == catalog()
    assert all(i in report for i in catalog())


def test_diophantine_resonant(tmp_path):
    assert run({"command": "diophantine-check", "omega": [1, 0.5]}, str(tmp_path)) == 0
    res, _, report = artifacts(tmp_path)
    w = res["witness"]
    assert w["passed"] is False and sorted(map(abs, w["worst_k"])) == [1, 2]
    assert "passed = false" in report


def test_expand_quartic_slope(tmp_path):
    assert run({"command": "expand", "model": "quartic", "N": 3}, str(tmp_path)) == 0
    res, rows, report = artifacts(tmp_path)
    assert rows[0] == ["eps", "sup_defect", "l2_defect"]
    slope = fit_order([(float(r[0]), float(r[1])) for r in rows[1:]])[0]
    assert abs(slope - 4) <= 0.15
    assert res["expansion"]["order"] == 3


def test_failure_paths(tmp_path):
    assert run({"command": "catalog", "bogus": 1}, str(tmp_path / "a")) == 2
    res, _, report = artifacts(tmp_path / "a")
    assert res["status"] == "error" and res["error"]["kind"]
    m = {"command": "expand", "model": "electro", "params": {"angular": [1.0, 2.0]}, "N": 1}
    assert run(m, str(tmp_path / "b")) == 3
    assert "error" in (tmp_path / "b" / "report.txt").read_text()
    m = {"command": "expand", "model": "vdp", "N": 1}
    assert run(m, str(tmp_path / "c")) == 2


def test_main_and_determinism(tmp_path):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"command": "residual-scan", "model": "reducible_diagonal",
                                    "N": 2, "seed": 7}))
    outs = []
    for name in ("x", "y"):
        assert main(["--manifest", str(manifest), "--out", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name / "result.json").read_bytes())
    assert outs[0] == outs[1]


def test_console_entry(tmp_path):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"command": "catalog"}))
    proc = subprocess.run([sys.executable, "-m", "sdde_lindstedt.cli", "--manifest",
                           str(manifest), "--out", str(tmp_path / "o"), "--verbose"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "quartic" in proc.stdout
