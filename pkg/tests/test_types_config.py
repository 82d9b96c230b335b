"""Validation and loading behaviour of the typed configuration layer."""
from __future__ import annotations

import json

import pytest

from station_ems.config import (
    ConfigError,
    config_from_dict,
    load_config,
    load_series_csv,
    load_timetable_csv,
    validate_config,
)
from station_ems.types import (
    UNIT_KW,
    EssSpec,
    EvClass,
    EvSession,
    TimeGrid,
    TimeSeries,
    parse_clock,
)

MINIMAL = {
    "grid": {"p_buy_max_kw": 4000, "p_sell_max_kw": 500},
    "scenario_axes": {
        "demand": "demand.csv",
        "pv": "radiation.csv",
        "price": "price.csv",
    },
}


def test_time_grid_arithmetic():
    grid = TimeGrid(10.0, 144)
    assert grid.step_hours == pytest.approx(1 / 6)
    assert grid.horizon_minutes == pytest.approx(1440.0)
    # clock times map to steps by flooring
    assert grid.step_of_minutes(0.0) == 0
    assert grid.step_of_minutes(9.999) == 0
    assert grid.step_of_minutes(10.0) == 1
    assert grid.step_of_minutes(450.0) == 45


def test_parse_clock():
    assert parse_clock("00:00") == 0.0
    assert parse_clock("07:30") == 450.0
    assert parse_clock("23:59") == 1439.0
    with pytest.raises(ValueError):
        parse_clock("24:00")
    with pytest.raises(ValueError):
        parse_clock("7h30")


def test_time_series_guards():
    s = TimeSeries.of([1.0, 2.0, 3.0], UNIT_KW)
    assert len(s) == 3
    assert list(s.as_array()) == [1.0, 2.0, 3.0]
    with pytest.raises(ValueError):
        s.require_length(4, "demand")
    with pytest.raises(ValueError):
        TimeSeries.of([1.0, -0.5], UNIT_KW).require_nonnegative("demand")


def test_ev_session_window_rules():
    ev = EvClass("car", 11.0, 22.0)
    with pytest.raises(ValueError):
        EvSession(0, ev, 5, 5, 10.0)
    with pytest.raises(ValueError):
        EvSession(0, ev, -1, 3, 10.0)
    with pytest.raises(ValueError):
        EvSession(0, ev, 0, 3, 10.0, soc_init_kwh=11.0)
    ses = EvSession(0, ev, 2, 6, 10.0)
    assert list(ses.parked_steps) == [2, 3, 4, 5, 6]
    assert list(ses.charging_steps) == [3, 4, 5, 6]


def test_ess_spec_validation():
    bad = EssSpec(soc_max_kwh=100.0, soc_min_kwh=50.0, soc_init_kwh=20.0,
                  charge_rate_max_kw=10.0, discharge_rate_max_kw=10.0,
                  eta_charge=0.9, eta_discharge=0.9)
    fields = {v.field for v in bad.check()}
    assert any("soc_init" in f for f in fields)


def test_config_defaults_fill_in():
    cfg = config_from_dict(json.loads(json.dumps(MINIMAL)))
    assert cfg.time_grid.horizon_steps == 144
    assert cfg.ess.soc_max_kwh == 1000.0
    assert cfg.ess.soc_min_kwh == pytest.approx(100.0)
    assert cfg.ess.soc_init_kwh == pytest.approx(500.0)
    assert cfg.pv.rated_power_kw == 1000.0
    assert cfg.peak.p_max_kw == 3000.0
    assert cfg.flexibility.kappa == 0.6
    assert cfg.weights.w_power == 1.0 and cfg.weights.w_theta == 1.0
    assert cfg.fleet.max_sessions == 179
    assert cfg.data.rb_axis is None
    assert validate_config(cfg) == []


def test_config_rejects_unknown_keys():
    doc = json.loads(json.dumps(MINIMAL))
    doc["ess"] = {"capacity_kwh": 500, "bogus": 1}
    with pytest.raises(ConfigError, match="bogus"):
        config_from_dict(doc)


def test_config_requires_grid_and_axes():
    with pytest.raises(ConfigError, match="grid"):
        config_from_dict({"scenario_axes": MINIMAL["scenario_axes"]})
    with pytest.raises(ConfigError, match="scenario_axes"):
        config_from_dict({"grid": MINIMAL["grid"]})


def test_axis_member_probabilities_checked():
    doc = json.loads(json.dumps(MINIMAL))
    doc["scenario_axes"]["pv"] = {"members": [
        {"csv": "a.csv", "probability": 0.7},
        {"csv": "b.csv", "probability": 0.7},
    ]}
    cfg = config_from_dict(doc)
    violations = validate_config(cfg)
    assert any("pv" in v.field for v in violations)


def test_load_config_round_trip(tmp_path):
    doc = json.loads(json.dumps(MINIMAL))
    path = tmp_path / "site.json"
    path.write_text(json.dumps(doc))
    cfg = load_config(path)
    assert cfg.grid.p_buy_max_kw == 4000.0
    assert cfg.base_dir == str(tmp_path)
    assert cfg.resolve("demand.csv") == tmp_path / "demand.csv"
    echoed = cfg.to_dict()
    assert "base_dir" not in echoed
    assert echoed["grid"]["p_buy_max_kw"] == 4000.0


def test_load_config_rejects_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_load_series_csv(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("step,value\n0,1.5\n1,2.5\n2,0\n")
    series = load_series_csv(path, UNIT_KW, expected_steps=3)
    assert series.unit == UNIT_KW
    assert list(series.values) == [1.5, 2.5, 0.0]
    # header is optional
    path.write_text("0,1.0\n1,2.0\n")
    assert len(load_series_csv(path, UNIT_KW)) == 2


def test_load_series_csv_rejects_gaps(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("0,1.0\n2,2.0\n")
    with pytest.raises(ConfigError, match="out of order"):
        load_series_csv(path, UNIT_KW)
    path.write_text("0,1.0\n1,2.0\n")
    with pytest.raises(ConfigError, match="expected"):
        load_series_csv(path, UNIT_KW, expected_steps=3)
    with pytest.raises(ConfigError):
        load_series_csv(tmp_path / "missing.csv", UNIT_KW)


def test_load_timetable_csv(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("departure_time\n07:30\n09:00\n")
    table = load_timetable_csv(path)
    assert list(table.departures_minutes) == [450.0, 540.0]
    path.write_text("departure_time\n25:00\n")
    with pytest.raises(ConfigError):
        load_timetable_csv(path)
