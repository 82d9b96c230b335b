"""Configuration loading and validation.

A run is described by one JSON file plus CSV series (columns ``step,value``)
referenced from it with paths relative to the config file.  Every series
carries a unit tag; a tag that contradicts the slot it is used in is a schema
violation.  Omitted optional fields fall back to the documented defaults.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Any

from .types import (
    EV_KIND_BUS,
    EV_KIND_CAR,
    BusTimetable,
    EssSpec,
    EvClass,
    FlexPolicy,
    GridSpec,
    KNOWN_UNITS,
    ObjectiveWeights,
    PeakPolicy,
    PvSpec,
    TimeGrid,
    TimeSeries,
    UNIT_KW,
    UNIT_PRICE,
    UNIT_RADIATION,
    Violation,
    check_all,
    parse_clock,
)


class ConfigError(ValueError):
    """Raised when a config file cannot be parsed or fails validation."""

    def __init__(self, message: str, violations: list[Violation] | None = None):
        self.violations = violations or []
        detail = "; ".join(str(v) for v in self.violations)
        super().__init__(message if not detail else f"{message}: {detail}")


@dataclass(frozen=True)
class SeriesRef:
    """Reference to one CSV series, with its declared unit."""

    path: str
    unit: str


@dataclass(frozen=True)
class AxisMemberRef:
    series: SeriesRef
    probability: float


@dataclass(frozen=True)
class AxisRef:
    """One uncertainty axis: series members with occurrence probabilities."""

    name: str
    members: tuple[AxisMemberRef, ...]

    def check(self) -> list[Violation]:
        out: list[Violation] = []
        if not self.members:
            out.append(Violation(f"scenario_axes.{self.name}", "needs at least one member"))
        for k, m in enumerate(self.members):
            if not 0 < m.probability <= 1:
                out.append(Violation(
                    f"scenario_axes.{self.name}[{k}].probability",
                    "must lie in (0, 1]"))
        total = sum(m.probability for m in self.members)
        if self.members and abs(total - 1.0) > 1e-9:
            out.append(Violation(
                f"scenario_axes.{self.name}", f"probabilities sum to {total!r}, expected 1"))
        return out


@dataclass(frozen=True)
class CarFleetSpec:
    arrival_rate_per_hour: float = 4.0
    window_start: str = "06:00"
    window_end: str = "22:00"
    energy_min_kwh: float = 10.0
    energy_max_kwh: float = 50.0
    p_nominal_kw: float = 11.0
    p_max_kw: float = 22.0
    eta: float = 1.0
    departure_offset_hours: float = 2.0
    departure_offset_mode_hours: float = 0.0

    def ev_class(self) -> EvClass:
        return EvClass(EV_KIND_CAR, self.p_nominal_kw, self.p_max_kw, self.eta)

    def check(self) -> list[Violation]:
        out = self.ev_class().check()
        if self.arrival_rate_per_hour < 0:
            out.append(Violation("fleet.car.arrival_rate_per_hour", "must be >= 0"))
        if not 0 <= self.energy_min_kwh <= self.energy_max_kwh:
            out.append(Violation("fleet.car.energy_min_kwh",
                                 "must lie in [0, energy_max_kwh]"))
        try:
            start, end = parse_clock(self.window_start), parse_clock(self.window_end)
            if start >= end:
                out.append(Violation("fleet.car.window_start", "must precede window_end"))
        except ValueError as exc:
            out.append(Violation("fleet.car.window", str(exc)))
        if self.departure_offset_hours < 0:
            out.append(Violation("fleet.car.departure_offset_hours", "must be >= 0"))
        if abs(self.departure_offset_mode_hours) > self.departure_offset_hours:
            out.append(Violation("fleet.car.departure_offset_mode_hours",
                                 "mode must lie within +-departure_offset_hours"))
        return out


@dataclass(frozen=True)
class BusFleetSpec:
    timetable_csv: str = ""
    energy_min_kwh: float = 100.0
    energy_max_kwh: float = 300.0
    p_nominal_kw: float = 300.0
    p_max_kw: float = 300.0
    eta: float = 1.0
    arrival_offset_min_minutes: float = 10.0
    arrival_offset_max_minutes: float = 60.0
    arrival_offset_mode_minutes: float = 35.0

    def ev_class(self) -> EvClass:
        return EvClass(EV_KIND_BUS, self.p_nominal_kw, self.p_max_kw, self.eta)

    def check(self) -> list[Violation]:
        out = self.ev_class().check()
        if not 0 <= self.energy_min_kwh <= self.energy_max_kwh:
            out.append(Violation("fleet.bus.energy_min_kwh",
                                 "must lie in [0, energy_max_kwh]"))
        if not 0 < self.arrival_offset_min_minutes <= self.arrival_offset_max_minutes:
            out.append(Violation("fleet.bus.arrival_offset_min_minutes",
                                 "must lie in (0, arrival_offset_max_minutes]"))
        if not (self.arrival_offset_min_minutes
                <= self.arrival_offset_mode_minutes
                <= self.arrival_offset_max_minutes):
            out.append(Violation("fleet.bus.arrival_offset_mode_minutes",
                                 "mode must lie within the offset range"))
        return out


@dataclass(frozen=True)
class FleetConfig:
    car: CarFleetSpec = CarFleetSpec()
    bus: BusFleetSpec = BusFleetSpec()
    max_sessions: int = 179
    seed: int = 0

    def check(self) -> list[Violation]:
        out = check_all(self.car.check(), self.bus.check())
        if self.max_sessions < 0:
            out.append(Violation("fleet.max_sessions", "must be >= 0"))
        return out


@dataclass(frozen=True)
class DataConfig:
    """Series references feeding the scenario tree."""

    demand: SeriesRef
    pv_axis: AxisRef
    price_axis: AxisRef
    rb_axis: AxisRef | None  # None: recovered-braking series derived from demand dips

    def check(self) -> list[Violation]:
        out: list[Violation] = []
        out.extend(_check_unit("data.demand", self.demand, UNIT_KW))
        out.extend(self.pv_axis.check())
        for k, m in enumerate(self.pv_axis.members):
            out.extend(_check_unit(f"scenario_axes.pv[{k}]", m.series, UNIT_RADIATION))
        out.extend(self.price_axis.check())
        for k, m in enumerate(self.price_axis.members):
            out.extend(_check_unit(f"scenario_axes.price[{k}]", m.series, UNIT_PRICE))
        if self.rb_axis is not None:
            out.extend(self.rb_axis.check())
            for k, m in enumerate(self.rb_axis.members):
                out.extend(_check_unit(f"scenario_axes.rb[{k}]", m.series, UNIT_KW))
        return out


def _check_unit(field: str, ref: SeriesRef, expected: str) -> list[Violation]:
    out: list[Violation] = []
    if ref.unit not in KNOWN_UNITS:
        out.append(Violation(field, f"unknown unit tag {ref.unit!r}"))
    elif ref.unit != expected:
        out.append(Violation(field, f"unit tag {ref.unit!r}, expected {expected!r}"))
    return out


@dataclass(frozen=True)
class SiteConfig:
    """Everything a run needs, resolved against the config file location."""

    time_grid: TimeGrid
    grid: GridSpec
    ess: EssSpec
    pv: PvSpec
    peak: PeakPolicy
    flexibility: FlexPolicy
    weights: ObjectiveWeights
    fleet: FleetConfig
    data: DataConfig
    base_dir: str = "."

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def resolve(self, rel: str) -> Path:
        return (Path(self.base_dir) / rel).resolve()


def validate_config(cfg: SiteConfig) -> list[Violation]:
    """Collect every rule violation; an empty list means the config is usable."""
    return check_all(
        cfg.time_grid.check(),
        cfg.grid.check(),
        cfg.ess.check(),
        cfg.pv.check(),
        cfg.peak.check(),
        cfg.flexibility.check(),
        cfg.weights.check(),
        cfg.fleet.check(),
        cfg.data.check(),
    )


# ---------------------------------------------------------------------------
# JSON parsing


def _expect_mapping(raw: Any, name: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return raw


def _take(raw: dict, name: str, keys: dict[str, Any]) -> dict[str, Any]:
    unknown = sorted(set(raw) - set(keys))
    if unknown:
        raise ConfigError(f"section {name!r} has unknown keys {unknown}")
    out = dict(keys)
    out.update(raw)
    return out


def _series_ref(raw: Any, field: str, default_unit: str) -> SeriesRef:
    if isinstance(raw, str):
        return SeriesRef(raw, default_unit)
    if isinstance(raw, dict):
        spec = _take(raw, field, {"csv": None, "unit": default_unit})
        if not isinstance(spec["csv"], str):
            raise ConfigError(f"{field}.csv must be a path string")
        return SeriesRef(spec["csv"], str(spec["unit"]))
    raise ConfigError(f"{field} must be a path or a {{csv, unit}} mapping")


def _axis_ref(raw: Any, name: str, default_unit: str) -> AxisRef:
    if isinstance(raw, (str, dict)) and not (isinstance(raw, dict) and "members" in raw):
        # single-member shorthand
        ref = _series_ref(raw, f"scenario_axes.{name}", default_unit)
        return AxisRef(name, (AxisMemberRef(ref, 1.0),))
    spec = _take(_expect_mapping(raw, f"scenario_axes.{name}"),
                 f"scenario_axes.{name}", {"members": None})
    members_raw = spec["members"]
    if not isinstance(members_raw, list):
        raise ConfigError(f"scenario_axes.{name}.members must be a list")
    members = []
    for k, m in enumerate(members_raw):
        mm = _take(_expect_mapping(m, f"scenario_axes.{name}[{k}]"),
                   f"scenario_axes.{name}[{k}]",
                   {"csv": None, "unit": default_unit, "probability": None})
        if not isinstance(mm["csv"], str):
            raise ConfigError(f"scenario_axes.{name}[{k}].csv must be a path string")
        if not isinstance(mm["probability"], (int, float)):
            raise ConfigError(f"scenario_axes.{name}[{k}].probability must be a number")
        members.append(AxisMemberRef(SeriesRef(mm["csv"], str(mm["unit"])),
                                     float(mm["probability"])))
    return AxisRef(name, tuple(members))


def config_from_dict(doc: dict[str, Any], base_dir: str = ".") -> SiteConfig:
    """Build a SiteConfig from a parsed JSON document (schema errors raise)."""
    doc = _take(_expect_mapping(doc, "config"), "config", {
        "time_grid": {}, "grid": None, "ess": {}, "pv": {}, "peak": {},
        "flexibility": {}, "weights": {}, "fleet": {}, "scenario_axes": None,
    })
    tg_raw = _take(_expect_mapping(doc["time_grid"], "time_grid"), "time_grid",
                   {"step_minutes": 10.0, "horizon_steps": 144})
    time_grid = TimeGrid(float(tg_raw["step_minutes"]), int(tg_raw["horizon_steps"]))

    if doc["grid"] is None:
        raise ConfigError("section 'grid' is required (p_buy_max_kw, p_sell_max_kw)")
    g_raw = _take(_expect_mapping(doc["grid"], "grid"), "grid",
                  {"p_buy_max_kw": None, "p_sell_max_kw": None})
    if g_raw["p_buy_max_kw"] is None or g_raw["p_sell_max_kw"] is None:
        raise ConfigError("grid.p_buy_max_kw and grid.p_sell_max_kw are required")
    grid = GridSpec(float(g_raw["p_buy_max_kw"]), float(g_raw["p_sell_max_kw"]))

    e_raw = _take(_expect_mapping(doc["ess"], "ess"), "ess", {
        "capacity_kwh": 1000.0, "soc_min_fraction": 0.10, "soc_init_fraction": 0.50,
        "charge_rate_max_kw": 1000.0, "discharge_rate_max_kw": 1000.0,
        "eta_charge": 0.95, "eta_discharge": 0.95, "self_discharge_rate": 0.0,
        "discharge_efficiency_divides": False, "terminal_equals_initial": False,
    })
    cap = float(e_raw["capacity_kwh"])
    ess = EssSpec(
        soc_max_kwh=cap,
        soc_min_kwh=cap * float(e_raw["soc_min_fraction"]),
        soc_init_kwh=cap * float(e_raw["soc_init_fraction"]),
        charge_rate_max_kw=float(e_raw["charge_rate_max_kw"]),
        discharge_rate_max_kw=float(e_raw["discharge_rate_max_kw"]),
        eta_charge=float(e_raw["eta_charge"]),
        eta_discharge=float(e_raw["eta_discharge"]),
        self_discharge_rate=float(e_raw["self_discharge_rate"]),
        discharge_efficiency_divides=bool(e_raw["discharge_efficiency_divides"]),
        terminal_equals_initial=bool(e_raw["terminal_equals_initial"]),
    )

    p_raw = _take(_expect_mapping(doc["pv"], "pv"), "pv", {
        "rated_power_kw": 1000.0, "radiation_certain_w_per_m2": 150.0,
        "radiation_standard_w_per_m2": 1000.0,
    })
    pv = PvSpec(float(p_raw["rated_power_kw"]),
                float(p_raw["radiation_certain_w_per_m2"]),
                float(p_raw["radiation_standard_w_per_m2"]))

    peak_raw = _take(_expect_mapping(doc["peak"], "peak"), "peak", {"p_max_kw": 3000.0})
    peak = PeakPolicy(float(peak_raw["p_max_kw"]))

    f_raw = _take(_expect_mapping(doc["flexibility"], "flexibility"),
                  "flexibility", {"kappa": 0.6})
    flexibility = FlexPolicy(float(f_raw["kappa"]))

    w_raw = _take(_expect_mapping(doc["weights"], "weights"), "weights",
                  {"w_power": 1.0, "w_theta": 1.0})
    weights = ObjectiveWeights(float(w_raw["w_power"]), float(w_raw["w_theta"]))

    fl_raw = _take(_expect_mapping(doc["fleet"], "fleet"), "fleet", {
        "car": {}, "bus": {}, "max_sessions": 179, "seed": 0,
    })
    car_defaults = {f: getattr(CarFleetSpec(), f) for f in CarFleetSpec.__dataclass_fields__}
    car_raw = _take(_expect_mapping(fl_raw["car"], "fleet.car"), "fleet.car", car_defaults)
    bus_defaults = {f: getattr(BusFleetSpec(), f) for f in BusFleetSpec.__dataclass_fields__}
    bus_raw = _take(_expect_mapping(fl_raw["bus"], "fleet.bus"), "fleet.bus", bus_defaults)
    fleet = FleetConfig(
        car=CarFleetSpec(
            arrival_rate_per_hour=float(car_raw["arrival_rate_per_hour"]),
            window_start=str(car_raw["window_start"]),
            window_end=str(car_raw["window_end"]),
            energy_min_kwh=float(car_raw["energy_min_kwh"]),
            energy_max_kwh=float(car_raw["energy_max_kwh"]),
            p_nominal_kw=float(car_raw["p_nominal_kw"]),
            p_max_kw=float(car_raw["p_max_kw"]),
            eta=float(car_raw["eta"]),
            departure_offset_hours=float(car_raw["departure_offset_hours"]),
            departure_offset_mode_hours=float(car_raw["departure_offset_mode_hours"]),
        ),
        bus=BusFleetSpec(
            timetable_csv=str(bus_raw["timetable_csv"]),
            energy_min_kwh=float(bus_raw["energy_min_kwh"]),
            energy_max_kwh=float(bus_raw["energy_max_kwh"]),
            p_nominal_kw=float(bus_raw["p_nominal_kw"]),
            p_max_kw=float(bus_raw["p_max_kw"]),
            eta=float(bus_raw["eta"]),
            arrival_offset_min_minutes=float(bus_raw["arrival_offset_min_minutes"]),
            arrival_offset_max_minutes=float(bus_raw["arrival_offset_max_minutes"]),
            arrival_offset_mode_minutes=float(bus_raw["arrival_offset_mode_minutes"]),
        ),
        max_sessions=int(fl_raw["max_sessions"]),
        seed=int(fl_raw["seed"]),
    )

    if doc["scenario_axes"] is None:
        raise ConfigError("section 'scenario_axes' is required (demand plus axes)")
    ax_raw = _take(_expect_mapping(doc["scenario_axes"], "scenario_axes"),
                   "scenario_axes", {"demand": None, "pv": None, "price": None, "rb": None})
    if ax_raw["demand"] is None:
        raise ConfigError("scenario_axes.demand is required")
    if ax_raw["pv"] is None or ax_raw["price"] is None:
        raise ConfigError("scenario_axes.pv and scenario_axes.price are required")
    data = DataConfig(
        demand=_series_ref(ax_raw["demand"], "scenario_axes.demand", UNIT_KW),
        pv_axis=_axis_ref(ax_raw["pv"], "pv", UNIT_RADIATION),
        price_axis=_axis_ref(ax_raw["price"], "price", UNIT_PRICE),
        rb_axis=None if ax_raw["rb"] is None else _axis_ref(ax_raw["rb"], "rb", UNIT_KW),
    )

    return SiteConfig(time_grid, grid, ess, pv, peak, flexibility, weights,
                      fleet, data, base_dir=base_dir)


def load_config(path: str | Path) -> SiteConfig:
    """Parse and validate a JSON config file.

    Raises ConfigError on unreadable JSON, schema errors, or rule violations.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    cfg = config_from_dict(doc, base_dir=str(path.parent))
    violations = validate_config(cfg)
    if violations:
        raise ConfigError(f"config {path} failed validation", violations)
    return cfg


def load_series_csv(path: str | Path, unit: str, expected_steps: int | None = None,
                    name: str | None = None) -> TimeSeries:
    """Read a ``step,value`` CSV into a TimeSeries.

    Steps must be 0..n-1 in order; a mismatched row count against
    ``expected_steps`` is rejected.
    """
    path = Path(path)
    label = name or path.name
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read series {path}: {exc}") from exc
    values: list[float] = []
    reader = csv.reader(text.splitlines())
    header_seen = False
    for row in reader:
        if not row or not row[0].strip():
            continue
        if not header_seen:
            header_seen = True
            head = [c.strip().lower() for c in row[:2]]
            if head == ["step", "value"]:
                continue  # header row is optional
        try:
            step, value = int(row[0]), float(row[1])
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"series {label}: bad row {row!r}") from exc
        if step != len(values):
            raise ConfigError(f"series {label}: step {step} out of order")
        values.append(value)
    series = TimeSeries.of(values, unit)
    if expected_steps is not None and len(series) != expected_steps:
        raise ConfigError(
            f"series {label} has {len(series)} steps, expected {expected_steps}")
    return series


def load_timetable_csv(path: str | Path) -> BusTimetable:
    """Read a one-column ``departure_time`` CSV of HH:MM clock times."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read timetable {path}: {exc}") from exc
    times: list[str] = []
    for row in csv.reader(text.splitlines()):
        if not row or not row[0].strip():
            continue
        cell = row[0].strip()
        if cell.lower() == "departure_time":
            continue
        times.append(cell)
    try:
        return BusTimetable.from_clock(times)
    except ValueError as exc:
        raise ConfigError(f"timetable {path}: {exc}") from exc
