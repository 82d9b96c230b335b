"""Timing harness for the relaxation solve on a full-size instance."""
import sys
import time

import numpy as np

sys.path.insert(0, "src")

from station_ems import (TimeGrid, GridSpec, EssSpec, PvSpec, PeakPolicy,
                         FlexPolicy, ObjectiveWeights, EvClass, EvSession,
                         TimeSeries, build_model, with_flex_bounds,
                         single_scenario_axis, build_tree)
from station_ems.config import (SiteConfig, FleetConfig, DataConfig, SeriesRef,
                                AxisRef)
from station_ems.types import UNIT_KW, UNIT_PRICE
from station_ems.milp import solve_lp


def make_model(n_t=144, n_cars=10, kappa=0.6, rb_steps=8):
    grid = TimeGrid(step_minutes=10.0, horizon_steps=n_t)
    cfg = SiteConfig(
        time_grid=grid,
        grid=GridSpec(p_buy_max_kw=4200.0, p_sell_max_kw=1000.0),
        ess=EssSpec(),
        pv=PvSpec(),
        peak=PeakPolicy(p_max_kw=3000.0),
        flexibility=FlexPolicy(kappa=kappa),
        weights=ObjectiveWeights(),
        fleet=FleetConfig(),
        data=DataConfig(demand=SeriesRef("d.csv", UNIT_KW),
                        pv_axis=AxisRef("pv", ()),
                        price_axis=AxisRef("price", ()),
                        rb_axis=None))
    rng = np.random.default_rng(7)
    t = np.arange(n_t)
    demand = 1200 + 900 * np.exp(-((t - 48) / 12.0) ** 2) \
        + 700 * np.exp(-((t - 108) / 14.0) ** 2)
    pv = np.maximum(0.0, 800 * np.sin((t - 36) * np.pi / 72))
    pv[:36] = 0
    pv[108:] = 0
    rb = np.zeros(n_t)
    pos = np.linspace(20, n_t - 40, rb_steps).astype(int)
    rb[pos] = 250.0
    price = 0.18 + 0.12 * np.exp(-((t - 50) / 10.0) ** 2) \
        + 0.10 * np.exp(-((t - 106) / 12.0) ** 2)
    tree = build_tree(
        single_scenario_axis("pv", TimeSeries.of(pv, UNIT_KW)),
        single_scenario_axis("price", TimeSeries.of(price, UNIT_PRICE)),
        single_scenario_axis("rb", TimeSeries.of(rb, UNIT_KW)),
        TimeSeries.of(demand, UNIT_KW))
    car = EvClass("car", 11.0, 22.0, 1.0)
    bus = EvClass("bus", 300.0, 300.0, 1.0)
    raw = []
    sid = 0
    for a, d, e in [(45, 54, 180), (54, 63, 240), (72, 81, 200),
                    (100, 109, 260), (109, 118, 150)]:
        raw.append(EvSession(sid, bus, a, d, float(e)))
        sid += 1
    for _ in range(n_cars):
        a = int(rng.integers(36, 120))
        d = min(a + int(rng.integers(6, 20)), n_t - 1)
        raw.append(EvSession(sid, car, a, d, float(rng.uniform(10, 50))))
        sid += 1
    sessions = with_flex_bounds(raw, kappa, grid)
    return build_model(cfg, sessions, tree, mode="A")


if __name__ == "__main__":
    t0 = time.time()
    model = make_model()
    t1 = time.time()
    print("build %.2fs cols %d rows %d" % (t1 - t0, model.milp.n_cols,
                                           model.milp.n_rows), flush=True)
    root = solve_lp(model.milp)
    t2 = time.time()
    print("root LP %.2fs status %s iters %d obj %.4f" % (
        t2 - t1, root.status, root.iterations, root.objective), flush=True)
