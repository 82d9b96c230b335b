"""Domain types shared across the scheduler.

Conventions: power in kW, energy in kWh, prices in currency per kWh,
solar radiation in W/m2.  Step indices are 0-based and run over
``range(horizon_steps)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Iterable

import numpy as np

UNIT_KW = "kW"
UNIT_RADIATION = "W_per_m2"
UNIT_PRICE = "per_kWh"

KNOWN_UNITS = (UNIT_KW, UNIT_RADIATION, UNIT_PRICE)


@dataclass(frozen=True)
class Violation:
    """One failed validation rule, named by the offending field."""

    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


def _check(out: list[Violation], ok: bool, field_name: str, message: str) -> None:
    if not ok:
        out.append(Violation(field_name, message))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform dispatch grid covering the scheduling horizon."""

    step_minutes: float = 10.0
    horizon_steps: int = 144

    @property
    def step_hours(self) -> float:
        return self.step_minutes / 60.0

    @property
    def horizon_minutes(self) -> float:
        return self.step_minutes * self.horizon_steps

    def step_of_minutes(self, minutes: float) -> int:
        """Step index containing the given clock offset (minutes from 00:00)."""
        return int(minutes // self.step_minutes)

    def check(self) -> list[Violation]:
        out: list[Violation] = []
        _check(out, self.step_minutes > 0, "time_grid.step_minutes", "must be > 0")
        _check(out, self.horizon_steps > 0, "time_grid.horizon_steps", "must be > 0")
        return out


@dataclass(frozen=True)
class GridSpec:
    """Exchange limits and metering conventions at the feeder."""

    p_buy_max_kw: float
    p_sell_max_kw: float

    def check(self) -> list[Violation]:
        out: list[Violation] = []
        _check(out, self.p_buy_max_kw > 0, "grid.p_buy_max_kw", "must be > 0")
        _check(out, self.p_sell_max_kw >= 0, "grid.p_sell_max_kw", "must be >= 0")
        return out


@dataclass(frozen=True)
class EssSpec:
    """Stationary storage fed by the grid side and by recovered braking power.

    ``discharge_efficiency_divides`` switches the state recursion from the
    default form (discharge power scaled by the efficiency before leaving the
    store) to the conventional one (drawn energy divided by the efficiency).
    """

    soc_max_kwh: float = 1000.0
    soc_min_kwh: float = 100.0
    soc_init_kwh: float = 500.0
    charge_rate_max_kw: float = 1000.0
    discharge_rate_max_kw: float = 1000.0
    eta_charge: float = 0.95
    eta_discharge: float = 0.95
    self_discharge_rate: float = 0.0
    discharge_efficiency_divides: bool = False
    terminal_equals_initial: bool = False

    def check(self) -> list[Violation]:
        out: list[Violation] = []
        _check(out, self.soc_max_kwh > 0, "ess.soc_max_kwh", "must be > 0")
        _check(out, 0 <= self.soc_min_kwh <= self.soc_max_kwh,
               "ess.soc_min_kwh", "must lie in [0, soc_max_kwh]")
        _check(out, self.soc_min_kwh <= self.soc_init_kwh <= self.soc_max_kwh,
               "ess.soc_init_kwh", "must lie in [soc_min_kwh, soc_max_kwh]")
        _check(out, self.charge_rate_max_kw >= 0, "ess.charge_rate_max_kw", "must be >= 0")
        _check(out, self.discharge_rate_max_kw >= 0, "ess.discharge_rate_max_kw", "must be >= 0")
        _check(out, 0 < self.eta_charge <= 1, "ess.eta_charge", "must lie in (0, 1]")
        _check(out, 0 < self.eta_discharge <= 1, "ess.eta_discharge", "must lie in (0, 1]")
        _check(out, 0 <= self.self_discharge_rate < 1,
               "ess.self_discharge_rate", "must lie in [0, 1)")
        return out


@dataclass(frozen=True)
class PvSpec:
    """Rated PV plant and the radiation thresholds of its power curve."""

    rated_power_kw: float = 1000.0
    radiation_certain_w_per_m2: float = 150.0
    radiation_standard_w_per_m2: float = 1000.0

    def check(self) -> list[Violation]:
        out: list[Violation] = []
        _check(out, self.rated_power_kw >= 0, "pv.rated_power_kw", "must be >= 0")
        _check(out, self.radiation_certain_w_per_m2 > 0,
               "pv.radiation_certain_w_per_m2", "must be > 0")
        _check(out, self.radiation_standard_w_per_m2 > self.radiation_certain_w_per_m2,
               "pv.radiation_standard_w_per_m2", "must exceed radiation_certain_w_per_m2")
        return out


@dataclass(frozen=True)
class PeakPolicy:
    """Cap on combined train demand plus EV charging load."""

    p_max_kw: float = 3000.0

    def check(self) -> list[Violation]:
        out: list[Violation] = []
        _check(out, self.p_max_kw > 0, "peak.p_max_kw", "must be > 0")
        return out


@dataclass(frozen=True)
class FlexPolicy:
    """Fraction of the nominal-charging energy guaranteed to each EV."""

    kappa: float = 0.6

    def check(self) -> list[Violation]:
        out: list[Violation] = []
        _check(out, 0 <= self.kappa <= 1, "flexibility.kappa", "must lie in [0, 1]")
        return out


@dataclass(frozen=True)
class ObjectiveWeights:
    """Relative weight of energy cost against delivered EV energy."""

    w_power: float = 1.0
    w_theta: float = 1.0

    def check(self) -> list[Violation]:
        out: list[Violation] = []
        _check(out, self.w_power >= 0, "weights.w_power", "must be >= 0")
        _check(out, self.w_theta >= 0, "weights.w_theta", "must be >= 0")
        return out


@dataclass(frozen=True)
class TimeSeries:
    """Immutable per-step series with a unit tag."""

    values: tuple[float, ...]
    unit: str

    def __len__(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def require_length(self, n: int, name: str = "series") -> None:
        if len(self.values) != n:
            raise ValueError(f"{name} has {len(self.values)} steps, expected {n}")

    def require_nonnegative(self, name: str = "series") -> None:
        bad = [i for i, v in enumerate(self.values) if v < 0]
        if bad:
            raise ValueError(f"{name} has negative entries at steps {bad[:5]}")

    @staticmethod
    def of(values: Iterable[float], unit: str) -> "TimeSeries":
        return TimeSeries(tuple(float(v) for v in values), unit)

    @staticmethod
    def constant(value: float, n: int, unit: str) -> "TimeSeries":
        return TimeSeries((float(value),) * n, unit)


EV_KIND_CAR = "car"
EV_KIND_BUS = "bus"


@dataclass(frozen=True)
class EvClass:
    """Charging envelope of one vehicle category."""

    kind: str
    p_nominal_kw: float
    p_max_kw: float
    eta: float = 1.0

    def check(self) -> list[Violation]:
        out: list[Violation] = []
        _check(out, self.kind in (EV_KIND_CAR, EV_KIND_BUS), "ev_class.kind",
               "must be 'car' or 'bus'")
        _check(out, self.p_nominal_kw > 0, "ev_class.p_nominal_kw", "must be > 0")
        _check(out, self.p_max_kw >= self.p_nominal_kw, "ev_class.p_max_kw",
               "must be >= p_nominal_kw")
        _check(out, 0 < self.eta <= 1, "ev_class.eta", "must lie in (0, 1]")
        return out


@dataclass(frozen=True)
class EvSession:
    """One charging visit.

    The vehicle occupies steps ``t_arrival .. t_departure`` inclusive; its
    state of charge at ``t_arrival`` equals ``soc_init_kwh`` and charging
    takes effect from the following step, so the usable charging span is
    ``t_departure - t_arrival`` steps.
    """

    session_id: int
    ev: EvClass
    t_arrival: int
    t_departure: int
    e_requested_kwh: float
    soc_init_kwh: float = 0.0
    theta_min_kwh: float = 0.0
    theta_max_kwh: float = 0.0

    def __post_init__(self) -> None:
        if self.t_arrival < 0:
            raise ValueError(f"session {self.session_id}: t_arrival must be >= 0")
        if self.t_departure <= self.t_arrival:
            raise ValueError(
                f"session {self.session_id}: t_departure must exceed t_arrival")
        if self.e_requested_kwh < 0:
            raise ValueError(f"session {self.session_id}: e_requested_kwh must be >= 0")
        if not 0 <= self.soc_init_kwh <= max(self.e_requested_kwh, 0.0):
            raise ValueError(
                f"session {self.session_id}: soc_init_kwh must lie in [0, e_requested_kwh]")

    @property
    def parked_steps(self) -> range:
        return range(self.t_arrival, self.t_departure + 1)

    @property
    def charging_steps(self) -> range:
        return range(self.t_arrival + 1, self.t_departure + 1)


@dataclass(frozen=True)
class BusTimetable:
    """Fixed departure times, minutes from midnight."""

    departures_minutes: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.departures_minutes)

    @staticmethod
    def from_clock(times: Iterable[str]) -> "BusTimetable":
        return BusTimetable(tuple(parse_clock(t) for t in times))


def parse_clock(text: str) -> float:
    """'HH:MM' -> minutes from midnight."""
    parts = text.strip().split(":")
    if len(parts) != 2:
        raise ValueError(f"bad clock time {text!r}, expected HH:MM")
    hours, minutes = int(parts[0]), int(parts[1])
    if not (0 <= hours < 24 and 0 <= minutes < 60):
        raise ValueError(f"bad clock time {text!r}")
    return 60.0 * hours + minutes


def check_all(*groups: Iterable[Violation]) -> list[Violation]:
    out: list[Violation] = []
    for g in groups:
        out.extend(g)
    return out
