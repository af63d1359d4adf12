"""End-to-end command-line tests against the shipped scenario configs."""

import json
import os
from pathlib import Path

import numpy as np
import pytest

from saddleflow import (ControllerGains, certify_equality, check_stability,
                        load_scenario)
from saddleflow.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _read(path):
    with open(path, "r") as fh:
        return fh.read()


def test_run_writes_csv_reports_and_figure(tmp_path, capsys):
    code = main(["run", str(CONFIGS / "two_state.json"),
                 "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "passed: True" in out
    for suffix in (".csv", "_certificate.csv", "_report.csv", ".png"):
        assert (tmp_path / ("two_state" + suffix)).exists()
    # envelope violation count 0: the certified bound held at every sample
    text = _read(tmp_path / "two_state.csv")
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    err_col = header.index("err")
    env_col = header.index("envelope")
    violations = 0
    for line in lines[1:]:
        row = [float(v) for v in line.split(",")]
        violations += row[err_col] > row[env_col] + 1e-12
    assert violations == 0


def test_run_is_byte_deterministic(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(CONFIGS / "two_state.json"), "--out", str(out_a),
                 "--quiet"]) == 0
    assert main(["run", str(CONFIGS / "two_state.json"), "--out", str(out_b),
                 "--quiet"]) == 0
    assert _read(out_a / "two_state.csv") == _read(out_b / "two_state.csv")


def test_quiet_suppresses_stdout(tmp_path, capsys):
    main(["run", str(CONFIGS / "two_state.json"), "--out", str(tmp_path),
          "--quiet"])
    assert capsys.readouterr().out == ""


def test_out_env_var_honored(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SADDLEFLOW_OUT", str(tmp_path / "env_dir"))
    assert main(["run", str(CONFIGS / "two_state.json"), "--quiet"]) == 0
    assert (tmp_path / "env_dir" / "two_state.csv").exists()


def test_certify_matches_programmatic_report(tmp_path, capsys):
    code = main(["certify", str(CONFIGS / "equality_scalar.json"),
                 "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    scenario = load_scenario(str(CONFIGS / "equality_scalar.json"))
    report = certify_equality(scenario.plant, check_stability(scenario.plant),
                              scenario.problem, 1.0, 0.2, 0.00011)
    assert ("eps_max = %g" % report.eps_max) in out
    assert ("rho_xi = %g" % report.rho_xi) in out
    assert (tmp_path / "equality_scalar_certificate.csv").exists()


def test_certify_rejects_traffic_configs(tmp_path, capsys):
    code = main(["certify", str(CONFIGS / "traffic_pd.json"),
                 "--out", str(tmp_path)])
    assert code == 2


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2


def test_invalid_scenario_lists_every_problem(tmp_path, capsys):
    config = {"kind": "traffic", "controller": "warp-drive", "dt": -1.0}
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(config))
    assert main(["run", str(path)]) == 2
    err = capsys.readouterr().err
    assert "network" in err
    assert "warp-drive" in err
    assert "dt" in err
    assert "t_span" in err


def test_compare_traffic_pair(tmp_path, capsys):
    code = main(["compare", str(CONFIGS / "traffic_pd.json"),
                 str(CONFIGS / "traffic_alinea.json"), "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "projected_pd" in out
    assert "alinea" in out
    table = _read(tmp_path / "compare.csv")
    rows = [l for l in table.splitlines() if not l.startswith("#")]
    assert rows[0].split(",")[0] == "controller"
    assert len(rows) == 3
    pd_row = rows[1].split(",")
    alinea_row = rows[2].split(",")
    assert float(pd_row[1]) >= float(alinea_row[1])
    assert (tmp_path / "compare.png").exists()
    assert (tmp_path / "traffic_pd.csv").exists()


def test_compare_single_config_one_row(tmp_path, capsys):
    code = main(["compare", str(CONFIGS / "traffic_alinea.json"),
                 "--out", str(tmp_path), "--quiet"])
    assert code == 0
    rows = [l for l in _read(tmp_path / "compare.csv").splitlines()
            if not l.startswith("#")]
    assert len(rows) == 2


def test_compare_rejects_mismatched_networks(tmp_path, capsys):
    with open(CONFIGS / "traffic_alinea.json") as fh:
        config = json.load(fh)
    config["network"]["links"][4]["d_max"] = 1.7
    other = tmp_path / "other_network.json"
    other.write_text(json.dumps(config))
    code = main(["compare", str(CONFIGS / "traffic_pd.json"), str(other),
                 "--out", str(tmp_path)])
    assert code == 1
    assert "differs" in capsys.readouterr().err


def test_compare_rejects_mismatched_horizons(tmp_path, capsys):
    with open(CONFIGS / "traffic_alinea.json") as fh:
        config = json.load(fh)
    config["t_span"] = [0.0, 150.0]
    other = tmp_path / "short_horizon.json"
    other.write_text(json.dumps(config))
    code = main(["compare", str(CONFIGS / "traffic_pd.json"), str(other),
                 "--out", str(tmp_path)])
    assert code == 1


def test_compare_rejects_tracking_configs(tmp_path, capsys):
    code = main(["compare", str(CONFIGS / "two_state.json"),
                 "--out", str(tmp_path)])
    assert code == 2


def test_every_shipped_config_loads():
    for path in sorted(CONFIGS.glob("*.json")):
        scenario = load_scenario(str(path))
        assert scenario.kind in ("tracking", "traffic")
