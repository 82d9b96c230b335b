"""Dispatch model structure, exact solves, independent checks, and repair."""
from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from station_ems.milp.branch_bound import brute_force_mip, solve_mip
from station_ems.milp.canonical import STATUS_OPTIMAL, feasibility_report
from station_ems.milp.simplex import solve_lp
from station_ems.model import (
    EmsSolveError,
    InfeasibleModelError,
    build_model,
    check_dispatch,
    extract_solution,
    repair_dispatch,
    solve_ems,
)
from station_ems.scenarios import ScenarioSet
from station_ems.types import EssSpec, TimeGrid

from conftest import car_session, make_scenario, make_site_cfg, single_set

GRID3 = TimeGrid(10.0, 3)


def small_model(mode="A", *, kappa=0.5, w_theta=1.0, ess=None,
                demand=(300.0, 420.0, 250.0), pv=(40.0, 90.0, 10.0),
                rb=(80.0, 0.0, 0.0), price=(0.1, 0.3, 0.2)):
    cfg = make_site_cfg(
        n_t=3, p_buy_max_kw=800.0, p_sell_max_kw=150.0,
        ess=ess or EssSpec(soc_max_kwh=60.0, soc_min_kwh=6.0, soc_init_kwh=30.0,
                           charge_rate_max_kw=40.0, discharge_rate_max_kw=40.0,
                           eta_charge=0.95, eta_discharge=0.95),
        p_max_kw=600.0, kappa=kappa, w_theta=w_theta)
    sessions = [car_session(0, 0, 2, 5.0, kappa, GRID3)]
    scenario = make_scenario(demand, pv=pv, rb=rb, price_buy=price)
    return build_model(cfg, sessions, single_set(scenario), mode=mode)


# ---------------------------------------------------------------------------
# structure

def test_column_and_row_census_mode_a():
    model = small_model("A")
    milp = model.milp
    # per step: buy, sell, charge, discharge, braking intake, store level,
    # plus two binaries; the one car adds power and level per parked step
    # and one departure-energy column
    assert milp.n_cols == 3 * 8 + 3 + 3 + 1
    # per step: balance, buy gate, sell gate, charge gate, discharge gate,
    # store recursion, and a peak row while the car is parked; the car adds
    # two level-recursion rows and one departure floor
    assert milp.n_rows == 3 * 7 + 2 + 1
    assert milp.n_binaries == 6
    names = set(milp.col_names)
    assert "G0000" in names and "UB0002" in names and "TH0000" in names


def test_column_and_row_census_mode_b():
    model = small_model("B")
    milp = model.milp
    assert milp.n_cols == 3 * 3 + 3 + 3 + 1
    assert milp.n_rows == 3 * 4 + 2 + 1
    assert milp.n_binaries == 3
    joined = " ".join(milp.col_names)
    for prefix in ("BC", "BD", "RB", "SB", "UB"):
        assert prefix not in joined
    assert model.index.station_cols["ess_charge"] is None


def test_mode_c_zeroes_plant_output():
    model = small_model("C")
    assert np.all(model.index.pv == 0.0)
    # demand side of the balance is unchanged
    assert model.index.demand[0, 1] == 420.0
    bl = model.milp.row_names.index("BL0001")
    assert model.milp.row_rhs[bl] == pytest.approx(420.0)


def test_balance_rhs_is_demand_minus_plant():
    model = small_model("A")
    bl = model.milp.row_names.index("BL0001")
    assert model.milp.row_rhs[bl] == pytest.approx(420.0 - 90.0)


def test_braking_intake_bounded_by_availability():
    model = small_model("A")
    idx = model.index
    col = int(idx.station_cols["rb_to_ess"][0, 0])
    assert model.milp.col_ub[col] == pytest.approx(80.0)
    col = int(idx.station_cols["rb_to_ess"][0, 1])
    assert model.milp.col_ub[col] == pytest.approx(0.0)


def test_theta_column_bounds_and_weight():
    model = small_model("A", w_theta=2.5)
    ses = model.index.sessions[0]
    col = int(model.index.theta_cols[0, 0])
    assert model.milp.col_lb[col] == pytest.approx(ses.theta_min_kwh)
    assert model.milp.col_ub[col] == pytest.approx(ses.theta_max_kwh)
    assert model.milp.col_obj[col] == pytest.approx(-2.5)


def test_arrival_level_is_pinned():
    model = small_model("A")
    col = int(model.index.ev_soc_cols[0][0][0])
    assert model.milp.col_lb[col] == model.milp.col_ub[col] == 0.0


def test_peak_rows_only_while_parked():
    cfg = make_site_cfg(n_t=4, p_buy_max_kw=800.0, p_sell_max_kw=150.0,
                        p_max_kw=600.0, kappa=0.0)
    sessions = [car_session(0, 1, 2, 5.0, 0.0, TimeGrid(10.0, 4))]
    scenario = make_scenario([300.0, 300.0, 300.0, 300.0])
    model = build_model(cfg, sessions, single_set(scenario))
    rows = set(model.milp.row_names)
    assert "PK0001" in rows and "PK0002" in rows
    assert "PK0000" not in rows and "PK0003" not in rows


def test_terminal_row_when_flagged():
    ess = EssSpec(soc_max_kwh=60.0, soc_min_kwh=6.0, soc_init_kwh=30.0,
                  charge_rate_max_kw=40.0, discharge_rate_max_kw=40.0,
                  eta_charge=0.95, eta_discharge=0.95,
                  terminal_equals_initial=True)
    model = small_model("A", ess=ess)
    assert "ST00" in model.milp.row_names
    sol, _ = solve_ems(model)
    assert sol.ess_soc[0, -1] == pytest.approx(30.0, abs=1e-6)


def test_discharge_factor_switch_changes_recursion():
    ess_mul = EssSpec(soc_max_kwh=60.0, soc_min_kwh=6.0, soc_init_kwh=30.0,
                      charge_rate_max_kw=40.0, discharge_rate_max_kw=40.0,
                      eta_charge=0.95, eta_discharge=0.8)
    ess_div = dataclasses.replace(ess_mul, discharge_efficiency_divides=True)

    def discharge_coeff(model):
        milp = model.milp
        r = milp.row_names.index("SR0001")
        bd = int(model.index.station_cols["ess_discharge"][0, 1])
        mask = (milp.a_rows == r) & (milp.a_cols == bd)
        return float(milp.a_vals[mask][0])

    dt_h = 1.0 / 6.0
    assert discharge_coeff(small_model("A", ess=ess_mul)) \
        == pytest.approx(0.8 * dt_h)
    assert discharge_coeff(small_model("A", ess=ess_div)) \
        == pytest.approx(dt_h / 0.8)


def test_presolve_rejects_demand_above_cap():
    with pytest.raises(InfeasibleModelError, match="step 1"):
        small_model("A", demand=(300.0, 700.0, 250.0))


def test_rejects_session_outside_horizon():
    cfg = make_site_cfg(n_t=3)
    bad = car_session(0, 0, 5, 5.0, 0.0, TimeGrid(10.0, 6))
    with pytest.raises(ValueError, match="horizon"):
        build_model(cfg, [bad], single_set(make_scenario([100.0] * 3)))


def test_rejects_unknown_mode_and_empty_set():
    with pytest.raises(ValueError, match="mode"):
        small_model("Z")
    cfg = make_site_cfg(n_t=3)
    with pytest.raises(ValueError, match="empty"):
        build_model(cfg, [], ScenarioSet(()))


# ---------------------------------------------------------------------------
# exact solves

@pytest.mark.parametrize("mode", ["A", "B", "C"])
def test_small_solve_matches_enumeration(mode):
    model = small_model(mode)
    sol, _ = solve_ems(model)
    ref = brute_force_mip(model.milp)
    assert ref.status == STATUS_OPTIMAL
    scale = max(1.0, abs(ref.objective))
    assert abs(sol.objective - ref.objective) / scale <= 1e-6
    assert all(c.passed for c in sol.checks if c.hard)


def test_solution_fields_are_consistent():
    model = small_model("A")
    sol, root = solve_ems(model)
    assert sol.status == STATUS_OPTIMAL
    assert root.status == STATUS_OPTIMAL
    # expected value identity over the (single) scenario
    assert sol.objective == pytest.approx(
        float(sol.probabilities @ (sol.cost_per_scenario
                                   - sol.theta_value_per_scenario)), abs=1e-9)
    assert sol.ev_total_power.shape == (1, 3)
    assert sol.departure_soc[0, 0] == pytest.approx(sol.theta[0, 0], abs=1e-6)


def test_scenario_separability():
    cfg = make_site_cfg(n_t=3, p_buy_max_kw=800.0, p_sell_max_kw=150.0,
                        p_max_kw=600.0, kappa=0.5)
    sessions = [car_session(0, 0, 2, 5.0, 0.5, GRID3)]
    s0 = make_scenario([300.0, 420.0, 250.0], pv=[40.0, 90.0, 10.0],
                       rb=[80.0, 0.0, 0.0], price_buy=[0.1, 0.3, 0.2],
                       probability=0.7, index=0)
    s1 = make_scenario([200.0, 500.0, 100.0], pv=[0.0, 20.0, 60.0],
                       rb=[0.0, 50.0, 0.0], price_buy=[0.2, 0.1, 0.4],
                       probability=0.3, index=1)
    joint = build_model(cfg, sessions, ScenarioSet((s0, s1)))
    joint_sol = solve_mip(joint.milp)
    assert joint_sol.status == STATUS_OPTIMAL

    total = 0.0
    for sc, prob in ((s0, 0.7), (s1, 0.3)):
        single = build_model(cfg, sessions, single_set(sc))
        sol, _ = solve_ems(single)
        total += prob * sol.objective
    assert joint_sol.objective == pytest.approx(total, abs=1e-6)


def test_infeasible_floor_raises_solve_error():
    # the cap leaves no room for charging, yet the floor demands energy
    cfg = make_site_cfg(n_t=3, p_buy_max_kw=800.0, p_sell_max_kw=150.0,
                        p_max_kw=100.0, kappa=1.0)
    sessions = [car_session(0, 0, 2, 5.0, 1.0, GRID3)]
    model = build_model(cfg, sessions, single_set(make_scenario([100.0] * 3)),
                        mode="B")
    with pytest.raises(EmsSolveError):
        solve_ems(model)


def test_warm_start_reaches_same_objective():
    model = small_model("A")
    sol_cold, root = solve_ems(model)
    sol_warm, _ = solve_ems(model, warm=root)
    assert sol_warm.objective == pytest.approx(sol_cold.objective, abs=1e-9)


# ---------------------------------------------------------------------------
# independent checks and repair

def test_check_dispatch_flags_balance_violation():
    model = small_model("A")
    sol, _ = solve_ems(model)
    sol.grid_buy[0, 1] += 5.0
    failures = {c.name for c in check_dispatch(model.index, sol) if not c.passed}
    assert "power_balance" in failures


def test_check_dispatch_flags_complementarity():
    model = small_model("A")
    sol, _ = solve_ems(model)
    sol.grid_buy[0, 0] += 3.0
    sol.grid_sell[0, 0] += 3.0
    failures = {c.name for c in check_dispatch(model.index, sol) if not c.passed}
    assert "grid_complementarity" in failures


def test_extract_solution_rejects_corrupt_point():
    model = small_model("A")
    mip = solve_mip(model.milp)
    bad = mip.x.copy()
    bad[int(model.index.station_cols["grid_buy"][0, 0])] += 10.0
    corrupt = dataclasses.replace(mip, x=bad)
    from station_ems.model import SolutionCheckError
    with pytest.raises(SolutionCheckError):
        extract_solution(corrupt, model)


def test_repair_turns_relaxation_into_feasible_point():
    # braking arrives at the expensive step, tempting the relaxation into
    # charging and discharging the store at once
    model = small_model("A", rb=(0.0, 80.0, 0.0), price=(0.1, 0.5, 0.1))
    lp = solve_lp(model.milp)
    assert lp.status == STATUS_OPTIMAL
    cand = repair_dispatch(model, lp.x)
    assert cand is not None
    report = feasibility_report(model.milp, cand)
    assert report["feasible"]
    bins = model.milp.binary_indices()
    assert np.all(np.abs(cand[bins] - np.round(cand[bins])) <= 1e-9)
    # the repair never undercuts the relaxation bound
    assert model.milp.objective_value(cand) >= lp.objective - 1e-9
