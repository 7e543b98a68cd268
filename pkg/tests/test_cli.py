import json
import subprocess
import sys

import pytest
import yaml

from srbfem.cli import main
from srbfem.geometry import read_vtk


def test_peaceman_check(capsys, tmp_path):
    assert main(["peaceman", "--draws", "20", "--check", "--output", str(tmp_path / "t.csv")]) == 0
    out = capsys.readouterr().out
    assert "[PASS] peaceman identity" in out
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 1 + 22


def test_validate_check(capsys, tmp_path):
    assert main(["validate", "--case", "case1", "--radii", "0.1,0.001", "--check",
                 "--output", str(tmp_path / "v.json")]) == 0
    assert capsys.readouterr().out.count("[PASS]") == 2
    assert len(json.loads((tmp_path / "v.json").read_text())) == 2


def test_mesh_export(tmp_path, capsys):
    out = tmp_path / "m" / "case2.vtk"
    assert main(["mesh", "--case", "case2", "-n", "4", "--output", str(out)]) == 0
    pts, cells, data = read_vtk(out)
    assert len(pts) == 125 and len(cells) == 384 and set(data) == {"v_exact", "cutoff"}


def test_run_with_config_and_flags(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"schema_version": 1, "case": "case2", "mesh_sizes": [4, 8, 16, 32]}))
    code = main(["run", str(cfg), "--mesh-sizes", "4,8", "--output", str(tmp_path / "o")])
    assert code == 0
    out = capsys.readouterr().out
    assert "fitted rates case2 srb" in out
    assert (tmp_path / "o" / "report.csv").exists()
    # with --check the full-sweep rules are not applicable to a two-mesh run, so nothing fails
    assert main(["run", str(cfg), "--mesh-sizes", "4,8", "--output", str(tmp_path / "o"), "--check"]) == 0


def test_run_check_fails_on_failed_rows(tmp_path, capsys):
    assert main(["run", "--case", "case2", "--mesh-sizes", "4", "--solver", "gmres-ilu", "--output",
                 str(tmp_path / "o"), "--check"]) == 0
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("schema_version: 1\nsolver: {method: gmres-ilu, max_iter: 1, restart: 2, rel_tol: 1.0e-30}\n"
                   "case: case2\nmesh_sizes: [4]\n")
    assert main(["run", str(cfg), "--output", str(tmp_path / "f"), "--check"]) == 1
    assert "FAILED" in capsys.readouterr().out


def test_invalid_config_exit_code(tmp_path, capsys):
    assert main(["run", "--mesh-sizes", "4,6", "--output", str(tmp_path / "o")]) == 2
    assert "power of two" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2


def test_bad_arguments_exit():
    with pytest.raises(SystemExit):
        main(["run", "--case", "case7"])


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "srbfem", "peaceman", "--draws", "3", "--check"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "PASS" in out.stdout
