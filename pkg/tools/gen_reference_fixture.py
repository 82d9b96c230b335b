"""Regenerate the day-long reference fixture under tests/fixtures/ref/.

The shapes are analytic so the fixture is reproducible from this script
alone.  Braking energy is placed in cheap-price windows; storage arbitrage
then separates charge and discharge steps on its own.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

N_T = 144
OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "ref"


def _bump(t: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-(((t - center) / width) ** 2))


def demand_kw(t: np.ndarray) -> np.ndarray:
    base = 1200.0 + 80.0 * np.sin(2.0 * np.pi * t / N_T)
    return base + 900.0 * _bump(t, 50.0, 14.0) + 1000.0 * _bump(t, 106.0, 12.0)


def price_per_kwh(t: np.ndarray) -> np.ndarray:
    return 0.12 + 0.14 * _bump(t, 52.0, 16.0) + 0.16 * _bump(t, 104.0, 14.0)


def radiation(t: np.ndarray, peak: float, width: float) -> np.ndarray:
    return peak * _bump(t, 78.0, width)


def braking_kw(t: np.ndarray, level: float) -> np.ndarray:
    # bursts sit where the price curve is near its floor
    out = np.zeros_like(t, dtype=float)
    out[(t >= 8) & (t <= 13)] = level
    out[(t >= 76) & (t <= 81)] = level
    return out


def write_series(name: str, values: np.ndarray, decimals: int) -> None:
    lines = ["step,value"]
    for k, v in enumerate(values):
        lines.append(f"{k},{round(float(v), decimals):.{decimals}f}")
    (OUT / name).write_text("\n".join(lines) + "\n")


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    t = np.arange(N_T, dtype=float)

    write_series("demand.csv", demand_kw(t), 3)
    write_series("price_day.csv", price_per_kwh(t), 5)
    write_series("radiation_sunny.csv", radiation(t, 950.0, 24.0), 3)
    write_series("radiation_cloudy.csv", radiation(t, 350.0, 22.0), 3)
    write_series("rb_high.csv", braking_kw(t, 300.0), 3)
    write_series("rb_low.csv", braking_kw(t, 120.0), 3)

    (OUT / "bus_timetable.csv").write_text(
        "departure_time\n07:30\n09:00\n12:00\n16:40\n18:10\n")

    config = {
        "time_grid": {"step_minutes": 10, "horizon_steps": N_T},
        "grid": {"p_buy_max_kw": 4200.0, "p_sell_max_kw": 1000.0},
        "ess": {
            "capacity_kwh": 1000.0,
            "soc_min_fraction": 0.10,
            "soc_init_fraction": 0.50,
            "charge_rate_max_kw": 1000.0,
            "discharge_rate_max_kw": 1000.0,
            "eta_charge": 0.95,
            "eta_discharge": 0.95,
        },
        "pv": {
            "rated_power_kw": 1000.0,
            "radiation_certain_w_per_m2": 150.0,
            "radiation_standard_w_per_m2": 1000.0,
        },
        "peak": {"p_max_kw": 3000.0},
        "flexibility": {"kappa": 0.6},
        "weights": {"w_power": 1.0, "w_theta": 1.0},
        "fleet": {
            "car": {},
            "bus": {"timetable_csv": "bus_timetable.csv"},
            "max_sessions": 15,
            "seed": 7,
        },
        "scenario_axes": {
            "demand": "demand.csv",
            "pv": {"members": [
                {"csv": "radiation_sunny.csv", "probability": 0.6},
                {"csv": "radiation_cloudy.csv", "probability": 0.4},
            ]},
            "price": "price_day.csv",
            "rb": {"members": [
                {"csv": "rb_high.csv", "probability": 0.5},
                {"csv": "rb_low.csv", "probability": 0.5},
            ]},
        },
    }
    (OUT / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"wrote fixture to {OUT}", flush=True)


if __name__ == "__main__":
    main()
