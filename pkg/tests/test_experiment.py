import json
import math

import pytest
import yaml

from srbfem import experiment
from srbfem.experiment import (
    Check,
    ConfigError,
    RunConfig,
    acceptance_checks,
    group_reports,
    load_config,
    run_experiment,
    run_row,
)
from srbfem.postprocess import ReportRow


@pytest.mark.parametrize("kw", [
    dict(mesh_sizes=[]),
    dict(mesh_sizes=[4, 6]),
    dict(mesh_sizes=[8, 4]),
    dict(mesh_sizes=[4, 4]),
    dict(radii=[1e-3, -1.0]),
    dict(radii=[]),
    dict(case="case9"),
    dict(formulations=[]),
    dict(formulations=["fem"]),
    dict(vbar="mean"),
    dict(reconstruction_degree=4),
    dict(workers=0),
    dict(schema_version=2),
    dict(solver={"method": "cg"}),
    dict(solver={"bogus": 1}),
])
def test_invalid_configs(kw, tmp_path):
    out = tmp_path / "out"
    with pytest.raises(ConfigError):
        RunConfig(output_dir=str(out), **kw)
    assert not out.exists()


def test_defaults_mirror_the_sweeps():
    c1 = RunConfig()
    assert c1.radii == [1e-1, 1e-2, 1e-3, 1e-4] and c1.mesh_sizes == [4, 8, 16, 32]
    assert RunConfig(case="case2").radii == [1e-3]
    assert len(RunConfig(formulations=["srb", "standard"]).tasks()) == 32


def test_yaml_loading_and_overrides(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text(yaml.safe_dump({"schema_version": 1, "case": "case2", "mesh_sizes": [4, 8], "output_dir": "x"}))
    cfg = load_config(f, mesh_sizes=[4, 8, 16], workers=None)
    assert cfg.case == "case2" and cfg.mesh_sizes == [4, 8, 16] and cfg.output_dir == "x"
    f.write_text("mesh_sizes: [4]\nunknown_key: 1\n")
    with pytest.raises(ConfigError):
        load_config(f)
    f.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(f)


def test_hash_ignores_output_location():
    a = RunConfig(case="case2", output_dir="a", workers=1)
    b = RunConfig(case="case2", output_dir="b", workers=3)
    assert a.hash() == b.hash()
    assert a.hash() != RunConfig(case="case2", vbar="average").hash()


def _small(tmp_path, name="out", **kw):
    base = dict(case="case2", mesh_sizes=[4, 8], output_dir=str(tmp_path / name))
    base.update(kw)
    return RunConfig(**base)


def test_run_writes_reports(tmp_path):
    reports, rows = run_experiment(_small(tmp_path, vtk=True))
    out = tmp_path / "out"
    assert {p.name for p in out.iterdir()} >= {"report.csv", "rates.csv", "summary.json",
                                                "case2_srb_R0.001_n4.vtk", "case2_srb_R0.001_n8_slice.csv",
                                                "case2_srb_R0.001_n8_well.csv"}
    assert [r.status for r in rows] == ["ok", "ok"]
    assert rows[1].e_L2 < rows[0].e_L2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema_version"] == 1 and len(summary["rows"]) == 2
    assert summary["rates"][0]["fitted"]["e_L2"] == pytest.approx(reports[0].fitted["e_L2"])
    assert summary["rows"][0]["extra"]["residual"] < 1e-10


def test_outputs_are_deterministic(tmp_path):
    run_experiment(_small(tmp_path, "a"))
    run_experiment(_small(tmp_path, "b"))
    for name in ("report.csv", "rates.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_resume_skips_finished_rows(tmp_path, monkeypatch):
    cfg = _small(tmp_path)
    run_experiment(cfg)
    before = (tmp_path / "out" / "report.csv").read_bytes()

    def boom(*a, **k):
        raise AssertionError("row recomputed")

    monkeypatch.setattr(experiment, "run_row", boom)
    run_experiment(cfg)
    assert (tmp_path / "out" / "report.csv").read_bytes() == before


def test_changed_config_recomputes(tmp_path, monkeypatch):
    run_experiment(_small(tmp_path))
    calls = []
    real = experiment.run_row

    def counting(*a, **k):
        calls.append(a[1:4])
        return real(*a, **k)

    monkeypatch.setattr(experiment, "run_row", counting)
    run_experiment(_small(tmp_path, reconstruction_degree=2))
    assert len(calls) == 2


def test_failures_are_recorded_per_row(tmp_path):
    cfg = _small(tmp_path, solver={"method": "gmres-ilu", "rel_tol": 1e-30, "max_iter": 1, "restart": 2})
    reports, rows = run_experiment(cfg)
    assert all(r.status == "failed" for r in rows)
    assert "NoConvergenceError" in rows[0].diagnostic
    assert reports == []


def test_standard_row_for_case1(tmp_path):
    row, extra = run_row(RunConfig(formulations=["standard"]), "standard", 0.1, 4)
    assert row.status == "ok" and math.isnan(row.e_H1)
    assert 0 < row.e_L2 < 0.1 and extra["dofs"] == 125 + 9


def test_parallel_workers_match_serial(tmp_path):
    _, serial = run_experiment(_small(tmp_path, "s"))
    _, par = run_experiment(_small(tmp_path, "p", workers=2))
    assert [r.e_L2 for r in serial] == [r.e_L2 for r in par]


def _rows(case, form, R, errs, **cols):
    out = []
    for n, e in zip((4, 8, 16, 32), errs):
        kw = dict(e_L2=e, e_H1=e, ehat_L2=e, ehat_H1=e)
        kw.update({k: v[(4, 8, 16, 32).index(n)] for k, v in cols.items()})
        out.append(ReportRow(case, form, R, n, 1 / n, **kw))
    return out


def test_acceptance_checks_on_synthetic_rows():
    fast = [1.0, 0.22, 0.048, 0.0106]  # rate ~2.2
    lin = [1.0, 0.5, 0.25, 0.125]
    rows = (_rows("case1", "srb", 1e-3, fast) + _rows("case1", "srb", 1e-4, fast)
            + _rows("case1", "standard", 0.1, lin)
            + _rows("case1", "standard", 1e-2, [1.0, 2.0, 1.0, 1.0])
            + _rows("case1", "standard", 1e-3, [1.0, 3.0, 1.0, 1.0]))
    by = {c.name: c for c in acceptance_checks(group_reports(rows), rows)}
    assert all(isinstance(c, Check) for c in by.values())
    assert by["case1 srb R=0.001 fitted L2 rate of v in [2.0, 2.4]"].passed
    assert not by["case1 standard R=0.1 fitted L2 rate of p in [1.1, 1.6]"].passed
    assert by["case1 srb h=1/8 L2 error R-invariant (R=1e-3 vs 1e-4) within 5%"].passed
    assert by["case1 standard h=1/8 well error grows as R decreases"].passed
    rows[-3].ehat_L2 = 0.1
    by = {c.name: c for c in acceptance_checks(group_reports(rows), rows)}
    assert not by["case1 standard h=1/8 well error grows as R decreases"].passed


def test_case2_acceptance_checks():
    quad = [64 * 2.77e-4, 16 * 2.77e-4, 4 * 2.77e-4, 2.77e-4]
    hat = [64 * 7.8e-5, 16 * 7.8e-5, 4 * 7.8e-5, 7.8e-5]
    lin = [0.8, 0.4, 0.2, 0.1]
    rows = _rows("case2", "srb", 1e-3, quad, ehat_L2=hat, e_H1=lin, ehat_H1=lin)
    checks = acceptance_checks(group_reports(rows), rows)
    assert len(checks) == 6 and all(c.passed for c in checks)
    rows[-1].ehat_L2 = 1e-3
    assert sum(not c.passed for c in acceptance_checks(group_reports(rows), rows)) == 2
