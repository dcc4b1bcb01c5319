import json
import os

import numpy as np
import pytest

from spectre.cli import main
from spectre.errors import ConfigurationError
from spectre.scenario import (
    load_scenario,
    materialize_f,
    parse_scenario,
    run_scenario,
)


def _base_doc(**over):
    doc = {
        "schema": 1,
        "operator": {"kind": "diagonal", "params": {"eigenvalues": [1.0, 4.0]}},
        "f": {"kind": "explicit", "values": [1.0, 1.0]},
        "evolve": {"T": 400.0, "dt": 0.05, "method": "spectral", "sample_stride": 10},
        "checks": ["unstable"],
    }
    doc.update(over)
    return doc


def _write(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=1))
    return str(path)


def test_parse_validates_dependencies():
    with pytest.raises(ConfigurationError, match="k_grid"):
        parse_scenario(_base_doc(checks=["unstable", "embedded"]))
    with pytest.raises(ConfigurationError, match="unstable"):
        parse_scenario(_base_doc(checks=["plancherel"]))
    with pytest.raises(ConfigurationError, match="forcing_k"):
        parse_scenario(_base_doc(checks=["unstable", "absorption"]))
    with pytest.raises(ConfigurationError, match="decompose"):
        parse_scenario(_base_doc(checks=["bromwich"]))
    with pytest.raises(ConfigurationError, match="unknown"):
        parse_scenario(_base_doc(extra=1))
    with pytest.raises(ConfigurationError, match="schema"):
        parse_scenario(_base_doc(schema=99))


def test_malformed_json_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"schema": 1,\n  "operator": {}\n')
    code = main(["diagnose", "--scenario", str(path)])
    assert code == 1
    err = capsys.readouterr().err
    assert "line 3" in err or "line 2" in err
    assert "column" in err


def test_materialize_f_kinds():
    n = 3
    ones = materialize_f({"kind": "all-ones"}, n)
    np.testing.assert_array_equal(ones, np.ones(3))
    a = materialize_f({"kind": "seeded-random", "seed": 5}, n)
    b = materialize_f({"kind": "seeded-random", "seed": 5}, n)
    np.testing.assert_array_equal(a, b)
    assert np.abs(a - materialize_f({"kind": "seeded-random", "seed": 6}, n)).max() > 0
    with pytest.raises(ConfigurationError, match="length"):
        materialize_f({"kind": "explicit", "values": [1.0, 2.0]}, 3)
    with pytest.raises(ConfigurationError, match="nonzero"):
        materialize_f({"kind": "explicit", "values": [0.0, 0.0, 0.0]}, 3)


def test_run_scenario_full_pipeline(tmp_path):
    doc = _base_doc(
        evolve={
            "T": 400.0,
            "dt": 0.05,
            "method": "spectral",
            "sample_stride": 10,
            "forcing_k": 0.7,
        },
        k_grid=[0.5, 2.5, 0.05],
        checks=[
            "unstable",
            "embedded",
            "amplitude",
            "decompose",
            "bromwich",
            "absorption",
            "abelian",
            "plancherel",
            "integration-rule",
        ],
    )
    scenario = load_scenario(_write(tmp_path, doc))
    report = run_scenario(scenario, strict_oracle=True)
    assert report.exit_code == 0
    checks = report.data["checks"]
    assert set(checks) == set(doc["checks"])
    assert not report.data["errors"]
    detected = [round(d["k"], 2) for d in checks["embedded"]["detections"]]
    assert detected == [1.0, 2.0]
    assert report.data["verdict"]["oracle_agreement"]["stable"] is True
    assert checks["decompose"]["bound_fit"]["w1_zero"] is True
    # timing keys never leak into the deterministic report
    assert "timings" not in report.data
    assert all(k in report.timings for k in ("setup", "total"))


def test_run_scenario_skips_dependent_checks_when_unstable(tmp_path):
    doc = _base_doc(
        operator={"kind": "diagonal", "params": {"eigenvalues": [-1.0, 4.0]}},
        evolve={"T": 60.0, "dt": 0.05, "forcing_k": 0.7},
        k_grid=[0.5, 2.5, 0.1],
        checks=["unstable", "embedded", "amplitude"],
    )
    scenario = load_scenario(_write(tmp_path, doc))
    report = run_scenario(scenario)
    assert report.exit_code == 0
    assert report.data["checks"]["unstable"]["stable"] is False
    assert "skipped" in report.data["checks"]["embedded"]
    assert "skipped" in report.data["checks"]["amplitude"]


def test_run_scenario_assumption_violation_exit_code(tmp_path):
    doc = _base_doc(
        operator={"kind": "diagonal", "params": {"eigenvalues": [[2.0, 1.0]]}},
        f={"kind": "all-ones"},
        evolve={"T": 40.0, "dt": 0.02},
    )
    scenario = load_scenario(_write(tmp_path, doc))
    report = run_scenario(scenario)
    assert report.exit_code == 3
    assert report.data["classification"]["assumption_a_ok"] is False
    # the report is still complete
    assert "unstable" in report.data["checks"]


def test_run_scenario_strict_oracle_disagreement(tmp_path):
    # excitation misses the second mode and the first is projected away, so
    # the scan sees nothing while the direct spectrum lists both
    doc = _base_doc(
        f={"kind": "explicit", "values": [1.0, 0.0]},
        projection=[1],
        k_grid=[0.5, 2.5, 0.05],
        checks=["unstable", "embedded"],
    )
    scenario = load_scenario(_write(tmp_path, doc))
    report = run_scenario(scenario, strict_oracle=True)
    assert report.exit_code == 4
    assert report.data["verdict"]["oracle_agreement"]["embedded"] is False
    relaxed = run_scenario(scenario, strict_oracle=False)
    assert relaxed.exit_code == 0


def test_diagnose_cli_outputs_are_deterministic(tmp_path, capsys):
    doc = _base_doc(k_grid=[0.8, 1.2, 0.05], checks=["unstable", "embedded"])
    path = _write(tmp_path, doc)
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert main(["diagnose", "--scenario", path, "--out", out1]) == 0
    assert main(["diagnose", "--scenario", path, "--out", out2]) == 0
    capsys.readouterr()
    for name in ("report.json", "growth.csv", "scan.csv"):
        a = open(os.path.join(out1, name), "rb").read()
        b = open(os.path.join(out2, name), "rb").read()
        assert a == b, name
    assert os.path.exists(os.path.join(out1, "timings.json"))
    rows = open(os.path.join(out1, "scan.csv")).read().splitlines()
    assert rows[0] == "k,fit_a,fit_b,fit_residual,flagged"
    assert len(rows) == 1 + 9  # header plus the 9 grid points


def test_config_hash_tracks_file_bytes(tmp_path):
    doc = _base_doc()
    s1 = load_scenario(_write(tmp_path, doc, "a.json"))
    s2 = load_scenario(_write(tmp_path, doc, "b.json"))
    assert s1.config_hash == s2.config_hash
    doc["evolve"]["T"] = 401.0
    s3 = load_scenario(_write(tmp_path, doc, "c.json"))
    assert s3.config_hash != s1.config_hash


def test_build_and_evolve_subcommands(tmp_path, capsys):
    path = _write(tmp_path, _base_doc())
    out = str(tmp_path / "out")
    assert main(["build", "--scenario", path, "--out", out]) == 0
    payload = json.load(open(os.path.join(out, "operator.json")))
    assert payload["classification"]["positive"] == [1.0, 4.0]
    assert main(["evolve", "--scenario", path, "--out", out, "--norms-only"]) == 0
    lines = open(os.path.join(out, "trajectory.csv")).read().splitlines()
    assert lines[0] == "t,norm_w,norm_c"
    assert len(lines) > 100
    capsys.readouterr()


def test_amplitude_subcommand(tmp_path, capsys):
    doc = _base_doc(
        evolve={
            "T": 1000.0,
            "dt": 0.05,
            "method": "spectral",
            "sample_stride": 10,
            "forcing_k": float(np.sqrt(2.0)),
        },
    )
    path = _write(tmp_path, doc)
    out = str(tmp_path / "amp")
    assert main(["amplitude", "--scenario", path, "--out", out]) == 0
    capsys.readouterr()
    report = json.load(open(os.path.join(out, "report.json")))
    v = report["checks"]["amplitude"]["v_avg"]
    got = np.array([complex(re, im) for re, im in v])
    np.testing.assert_allclose(got, [-1.0, 0.5], atol=5e-3)


def test_sweep_generates_and_runs(tmp_path, capsys):
    path = _write(tmp_path, _base_doc(evolve={"T": 100.0, "dt": 0.05}))
    out = str(tmp_path / "sweep")
    code = main(
        ["sweep", "--scenario", path, "--param", "evolve.T", "--values", "150,200", "--out", out, "--run"]
    )
    assert code == 0
    capsys.readouterr()
    files = sorted(os.listdir(out))
    assert "scenario_000.json" in files and "scenario_001.json" in files
    assert "run_000" in files and "run_001" in files
    summary = json.load(open(os.path.join(out, "summary.json")))
    assert set(summary.values()) == {0}
    t0 = json.load(open(os.path.join(out, "scenario_000.json")))["evolve"]["T"]
    assert t0 == 150


def test_sweep_rejects_unknown_path(tmp_path, capsys):
    path = _write(tmp_path, _base_doc())
    code = main(["sweep", "--scenario", path, "--param", "evolve.missing.deep", "--values", "1"])
    assert code == 1
    assert "not found" in capsys.readouterr().err


def test_seed_override_applies_to_operator_and_excitation(tmp_path):
    doc = _base_doc(
        operator={
            "kind": "perturbed-random",
            "params": {"base_spectrum": [1.0, 3.0, 6.0], "magnitude": 0.05, "seed": 1},
        },
        f={"kind": "seeded-random", "seed": 1},
        evolve={"T": 120.0, "dt": 0.02},
    )
    scenario = load_scenario(_write(tmp_path, doc))
    a = run_scenario(scenario, seed_override=9)
    b = run_scenario(scenario, seed_override=9)
    c = run_scenario(scenario)
    assert a.to_json_bytes() == b.to_json_bytes()
    assert a.data["f"] != c.data["f"]
    assert a.data["seed_override"] == 9


def test_verify_subcommand_smoke(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "PASS free-evolution-sine" in out
    assert "FAIL" not in out
