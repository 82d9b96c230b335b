"""End-to-end runs: artifacts, determinism, comparisons, and the CLI."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from station_ems.cli import main
from station_ems.config import ConfigError, load_config
from station_ems.pipeline import (
    build_fleet,
    build_scenarios,
    compare_runs,
    run_pipeline,
    write_outputs,
)


def write_small_config(root: Path, *, n_t: int = 6, pv_members: int = 2,
                       seed: int = 1, signed_demand: bool = True) -> Path:
    """A one-hour site that solves in well under a second."""
    root.mkdir(parents=True, exist_ok=True)

    def series(name, values):
        lines = ["step,value"] + [f"{k},{v}" for k, v in enumerate(values)]
        (root / name).write_text("\n".join(lines) + "\n")

    demand = [120.0, 180.0, -60.0, 150.0, 90.0, 60.0][:n_t]
    if not signed_demand:
        demand = [abs(v) for v in demand]
    series("demand.csv", demand)
    # kept small enough that any plant surplus fits under the sell cap
    series("radiation_a.csv", [0.0, 60.0, 120.0, 160.0, 90.0, 20.0][:n_t])
    series("radiation_b.csv", [0.0, 30.0, 60.0, 80.0, 40.0, 0.0][:n_t])
    series("price.csv", [0.1, 0.25, 0.15, 0.3, 0.2, 0.12][:n_t])
    minutes = n_t * 10
    window_end = f"{minutes // 60:02d}:{minutes % 60:02d}"

    if pv_members == 1:
        pv = "radiation_a.csv"
    else:
        pv = {"members": [
            {"csv": "radiation_a.csv", "probability": 0.5},
            {"csv": "radiation_b.csv", "probability": 0.5},
        ]}
    doc = {
        "time_grid": {"step_minutes": 10, "horizon_steps": n_t},
        "grid": {"p_buy_max_kw": 500.0, "p_sell_max_kw": 200.0},
        "ess": {
            "capacity_kwh": 40.0,
            "soc_min_fraction": 0.1,
            "soc_init_fraction": 0.5,
            "charge_rate_max_kw": 30.0,
            "discharge_rate_max_kw": 30.0,
        },
        "peak": {"p_max_kw": 400.0},
        "flexibility": {"kappa": 0.5},
        "fleet": {
            "car": {"arrival_rate_per_hour": 6.0,
                    "window_start": "00:00",
                    "window_end": window_end,
                    "energy_min_kwh": 4.0,
                    "energy_max_kwh": 10.0},
            "max_sessions": 3,
            "seed": seed,
        },
        "scenario_axes": {"demand": "demand.csv", "pv": pv,
                          "price": "price.csv"},
    }
    path = root / "config.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def read_csv(path: Path):
    with path.open() as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_build_scenarios_splits_signed_demand(tmp_path):
    cfg = load_config(write_small_config(tmp_path))
    tree = build_scenarios(cfg)
    assert len(tree) == 2
    sc = tree[0]
    assert sc.demand.values[2] == 0.0
    assert sc.rb_available.values[2] == 60.0
    assert all(v == 0.0 for k, v in enumerate(sc.rb_available.values) if k != 2)
    assert sc.label.endswith("from-demand")
    # plant members arrive as radiation and leave as kW
    assert sc.pv.unit == "kW"
    assert sc.pv.values[3] == pytest.approx(160.0)   # above certainty knee


def test_explicit_rb_axis_rejects_signed_demand(tmp_path):
    path = write_small_config(tmp_path)
    doc = json.loads(path.read_text())
    doc["scenario_axes"]["rb"] = "radiation_b.csv"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    cfg = load_config(bad)
    with pytest.raises(ConfigError, match="negative"):
        build_scenarios(cfg)


def test_build_fleet_respects_cap_and_seed(tmp_path):
    cfg = load_config(write_small_config(tmp_path))
    a = build_fleet(cfg, 1)
    b = build_fleet(cfg, 1)
    c = build_fleet(cfg, 2)
    assert len(a) <= 3
    assert [(s.t_arrival, s.e_requested_kwh) for s in a] \
        == [(s.t_arrival, s.e_requested_kwh) for s in b]
    assert [(s.t_arrival, s.e_requested_kwh) for s in a] \
        != [(s.t_arrival, s.e_requested_kwh) for s in c]


def test_run_writes_all_artifacts(tmp_path):
    cfg_path = write_small_config(tmp_path / "site")
    out = tmp_path / "out"
    result = run_pipeline(cfg_path, mode="A", out_dir=out)
    assert (out / "report.json").exists()
    report = json.loads((out / "report.json").read_text())
    assert report["checks_passed"] is True
    assert report["mode"] == "A"
    assert report["scenario_tree"]["n_scenarios"] == 2
    assert report["scenario_tree"]["probability_sum"] == pytest.approx(1.0)

    n_t = result.cfg.time_grid.horizon_steps
    head, rows = read_csv(out / "dispatch.csv")
    assert head[:3] == ["scenario", "step", "demand_kw"]
    assert len(rows) == 2 * n_t

    head, rows = read_csv(out / "schedule_ev.csv")
    assert head == ["scenario", "step", "session", "ev_power_kw", "ev_soc_kwh"]
    parked = sum(s.t_departure - s.t_arrival + 1 for s in result.sessions)
    assert len(rows) == 2 * parked

    head, rows = read_csv(out / "theta.csv")
    assert head[:3] == ["scenario", "session", "theta_kwh"]
    assert len(rows) == 2 * len(result.sessions)


def test_report_objective_identity(tmp_path):
    cfg_path = write_small_config(tmp_path)
    result = run_pipeline(cfg_path, mode="A")
    rep = result.report
    total = sum(r["probability"] * r["objective"]
                for r in rep["objective"]["per_scenario"])
    assert rep["objective"]["total"] == pytest.approx(total, abs=1e-12)
    assert rep["objective"]["total"] == pytest.approx(
        rep["objective"]["expected_cost"]
        - rep["objective"]["expected_theta_value"], abs=1e-9)
    echo = rep["config_echo"]
    assert echo == json.loads(json.dumps(result.cfg.to_dict()))
    assert "base_dir" not in echo


def test_reports_are_byte_identical_across_runs(tmp_path):
    cfg_path = write_small_config(tmp_path / "site")
    out1 = tmp_path / "r1"
    out2 = tmp_path / "r2"
    run_pipeline(cfg_path, mode="A", seed=1, out_dir=out1)
    run_pipeline(cfg_path, mode="A", seed=1, out_dir=out2)
    for name in ("report.json", "dispatch.csv", "schedule_ev.csv", "theta.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_scenario_filter_limits_solves(tmp_path):
    cfg_path = write_small_config(tmp_path)
    result = run_pipeline(cfg_path, mode="A", scenario_filter=[1])
    assert result.solved_indices == (1,)
    rep = result.report
    assert rep["scenario_tree"]["solved"] == [1]
    assert rep["scenario_tree"]["n_scenarios"] == 2
    assert len(rep["objective"]["per_scenario"]) == 1
    with pytest.raises(ConfigError, match="unknown"):
        run_pipeline(cfg_path, mode="A", scenario_filter=[5])


def test_mps_export_one_file_per_scenario(tmp_path):
    cfg_path = write_small_config(tmp_path)
    mps = tmp_path / "mps"
    run_pipeline(cfg_path, mode="A", export_mps_dir=mps)
    files = sorted(p.name for p in mps.iterdir())
    assert files == ["scenario_0000.mps", "scenario_0001.mps"]
    from station_ems.milp.mps import parse_mps
    back = parse_mps(mps / "scenario_0000.mps")
    assert back.n_cols > 0 and back.n_rows > 0


def test_compare_runs_self_is_zero(tmp_path):
    cfg_path = write_small_config(tmp_path)
    a = run_pipeline(cfg_path, mode="A")
    b = run_pipeline(cfg_path, mode="A")
    cmp = compare_runs(a.report, b.report)
    assert cmp["objective_delta"] == 0.0
    assert cmp["peak_delta_kw"] == 0.0
    assert cmp["theta_total_delta_kwh"] == 0.0


def test_compare_runs_across_modes(tmp_path):
    cfg_path = write_small_config(tmp_path)
    a = run_pipeline(cfg_path, mode="A")
    b = run_pipeline(cfg_path, mode="B")
    cmp = compare_runs(a.report, b.report)
    assert cmp["mode_a"] == "A" and cmp["mode_b"] == "B"
    # extra equipment can only help the minimum
    assert cmp["objective_delta"] <= 1e-6
    assert len(cmp["theta_deltas"]) == 2 * len(a.sessions)


def test_compare_runs_rejects_mismatched_sessions(tmp_path):
    cfg_path = write_small_config(tmp_path)
    a = run_pipeline(cfg_path, mode="A", seed=1)
    b = run_pipeline(cfg_path, mode="A", seed=2)
    with pytest.raises(ValueError, match="session"):
        compare_runs(a.report, b.report)
    c = run_pipeline(cfg_path, mode="A", seed=1, scenario_filter=[0])
    with pytest.raises(ValueError, match="subset"):
        compare_runs(a.report, c.report)


# ---------------------------------------------------------------------------
# command line

def test_cli_run_and_compare(tmp_path, capsys):
    cfg_path = write_small_config(tmp_path / "site")
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["run", "--config", str(cfg_path), "--mode", "A",
                 "--out", str(out_a)]) == 0
    assert main(["run", "--config", str(cfg_path), "--mode", "B",
                 "--out", str(out_b)]) == 0
    capsys.readouterr()
    assert main(["compare", str(out_a), str(out_b)]) == 0
    cmp = json.loads(capsys.readouterr().out)
    assert cmp["mode_a"] == "A" and cmp["mode_b"] == "B"


def test_cli_run_prints_report_without_out(tmp_path, capsys):
    cfg_path = write_small_config(tmp_path)
    assert main(["run", "--config", str(cfg_path), "--mode", "A"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["checks_passed"] is True


def test_cli_scenario_filter_parsing(tmp_path, capsys):
    cfg_path = write_small_config(tmp_path)
    assert main(["run", "--config", str(cfg_path), "--scenarios", "0-1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["scenario_tree"]["solved"] == [0, 1]


def test_cli_error_codes(tmp_path):
    missing = tmp_path / "nope.json"
    assert main(["run", "--config", str(missing)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["run", "--config", str(bad)]) == 2


def test_cli_oracle_on_tiny_site(tmp_path, capsys):
    cfg_path = write_small_config(tmp_path, n_t=4, pv_members=1)
    code = main(["oracle", "--config", str(cfg_path)])
    out = capsys.readouterr().out
    assert code == 0, out
    assert "agree" in out.lower()
