"""End-to-end day-ahead run: inputs to solved schedules and artifact files.

A run loads the config, draws the charging visits, assembles the uncertainty
axes, solves every selected scenario independently, and aggregates the
results into a deterministic report plus plot-ready CSV files.  Scenario
solves share warm-start information because the models differ only in data,
never in shape.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import (
    AxisRef,
    ConfigError,
    SiteConfig,
    load_config,
    load_series_csv,
    load_timetable_csv,
)
from .fleet import fulfillment_time, sample_bus_sessions, sample_car_sessions, \
    uncoordinated_profile
from .milp.mps import export_mps
from .model import EmsSolution, MODES, build_model, solve_ems
from .pv import pv_series
from .scenarios import (
    AxisMember,
    ScenarioAxis,
    ScenarioSet,
    build_tree,
    single_scenario_axis,
    split_demand,
)
from .types import EvSession

REPORT_NAME = "report.json"
DISPATCH_NAME = "dispatch.csv"
SCHEDULE_NAME = "schedule_ev.csv"
THETA_NAME = "theta.csv"

INTERPRETATION_NOTES = (
    "Storage charge and discharge rate limits are read as kW power caps "
    "applied at every step.",
    "Storage bookkeeping starts from the configured initial level, treated "
    "as the state one step before the horizon.",
    "Each scenario sells energy at its buying price.",
)


@dataclass(eq=False)
class RunResult:
    """Everything a finished run produced, with the report already built."""

    cfg: SiteConfig
    mode: str
    seed: int
    sessions: tuple[EvSession, ...]
    tree: ScenarioSet
    solved_indices: tuple[int, ...]
    solutions: tuple[EmsSolution, ...]
    report: dict

    @property
    def objective(self) -> float:
        return self.report["objective"]["total"]


def build_fleet(cfg: SiteConfig, seed: int) -> tuple[EvSession, ...]:
    """Draw the day's charging visits: buses first, then cars, then the cap."""
    grid = cfg.time_grid
    kappa = cfg.flexibility.kappa
    sessions: list[EvSession] = []
    bus = cfg.fleet.bus
    if bus.timetable_csv:
        timetable = load_timetable_csv(cfg.resolve(bus.timetable_csv))
        sessions.extend(sample_bus_sessions(
            timetable, grid, seed,
            energy_range_kwh=(bus.energy_min_kwh, bus.energy_max_kwh),
            ev=bus.ev_class(), kappa=kappa,
            arrival_offset_minutes=(bus.arrival_offset_min_minutes,
                                    bus.arrival_offset_max_minutes),
            arrival_offset_mode_minutes=bus.arrival_offset_mode_minutes,
            first_id=0))
    car = cfg.fleet.car
    sessions.extend(sample_car_sessions(
        grid, seed,
        rate_per_hour=car.arrival_rate_per_hour,
        window=(car.window_start, car.window_end),
        energy_range_kwh=(car.energy_min_kwh, car.energy_max_kwh),
        ev=car.ev_class(), kappa=kappa,
        departure_offset_hours=car.departure_offset_hours,
        departure_offset_mode_hours=car.departure_offset_mode_hours,
        first_id=len(sessions)))
    return tuple(sessions[:cfg.fleet.max_sessions])


def _load_axis(cfg: SiteConfig, ref: AxisRef, transform=None) -> ScenarioAxis:
    members = []
    for m in ref.members:
        series = load_series_csv(cfg.resolve(m.series.path), m.series.unit,
                                 cfg.time_grid.horizon_steps)
        if transform is not None:
            series = transform(series)
        members.append(AxisMember(series, m.probability,
                                  Path(m.series.path).stem))
    return ScenarioAxis(ref.name, tuple(members))


def build_scenarios(cfg: SiteConfig) -> ScenarioSet:
    """Load every referenced series and cross the axes into the scenario set.

    Without an explicit recovered-braking axis, negative demand readings are
    split off as the braking availability of a single implicit member.
    """
    n_t = cfg.time_grid.horizon_steps
    raw = load_series_csv(cfg.resolve(cfg.data.demand.path),
                          cfg.data.demand.unit, n_t, name="demand")
    if cfg.data.rb_axis is None:
        base, rb_series = split_demand(raw)
        rb_axis = single_scenario_axis("rb", rb_series, "from-demand")
    else:
        if np.any(raw.as_array() < 0.0):
            raise ConfigError(
                "demand series has negative entries, but an explicit rb axis "
                "is configured; negatives are only meaningful without one")
        base = raw
        rb_axis = _load_axis(cfg, cfg.data.rb_axis)
    pv_axis = _load_axis(cfg, cfg.data.pv_axis,
                         transform=lambda s: pv_series(s, cfg.pv))
    price_axis = _load_axis(cfg, cfg.data.price_axis)
    return build_tree(pv_axis, price_axis, rb_axis, base)


def _single_scenario_set(sc) -> ScenarioSet:
    return ScenarioSet((replace(sc, probability=1.0),))


def _session_rows(sessions, grid, kappa) -> list[dict]:
    rows = []
    for s in sessions:
        rows.append({
            "session": s.session_id,
            "kind": s.ev.kind,
            "arrival_step": s.t_arrival,
            "departure_step": s.t_departure,
            "e_requested_kwh": s.e_requested_kwh,
            "soc_init_kwh": s.soc_init_kwh,
            "theta_min_kwh": s.theta_min_kwh,
            "theta_max_kwh": s.theta_max_kwh,
            "p_nominal_kw": s.ev.p_nominal_kw,
            "p_max_kw": s.ev.p_max_kw,
            "eta": s.ev.eta,
            "fulfillment_steps": fulfillment_time(s, grid),
            "kappa": kappa,
        })
    return rows


def _fingerprint(payload) -> str:
    blob = json.dumps(_plain(payload), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _build_report(cfg: SiteConfig, mode: str, seed: int, sessions,
                  tree: ScenarioSet, solved, solutions,
                  axis_sizes: dict) -> dict:
    grid = cfg.time_grid
    p_max = cfg.peak.p_max_kw
    session_rows = _session_rows(sessions, grid, cfg.flexibility.kappa)
    probs = {sc.index: sc.probability for sc in tree}

    per_obj = []
    total = exp_cost = exp_theta = 0.0
    for idx, sol in zip(solved, solutions):
        pi = probs[idx]
        cost = float(sol.cost_per_scenario[0])
        theta_val = float(sol.theta_value_per_scenario[0])
        per_obj.append({"scenario": idx, "probability": pi, "cost": cost,
                        "theta_value": theta_val,
                        "objective": sol.objective})
        total += pi * sol.objective
        exp_cost += pi * cost
        exp_theta += pi * theta_val

    theta_rows = []
    peak_rows = []
    ess_rows = []
    check_rows = []
    solver_rows = []
    opt_peak = 0.0
    for idx, sol in zip(solved, solutions):
        for i, ses in enumerate(sessions):
            theta_rows.append({
                "scenario": idx, "session": ses.session_id,
                "theta_kwh": float(sol.theta[0, i]),
                "theta_min_kwh": ses.theta_min_kwh,
                "theta_max_kwh": ses.theta_max_kwh,
                "e_requested_kwh": ses.e_requested_kwh,
                "departure_soc_kwh": float(sol.departure_soc[0, i]),
            })
        combined_kw = sol.input_demand[0] + sol.ev_total_power[0]
        opt_peak = max(opt_peak, float(combined_kw.max(initial=0.0)))
        peak_rows.append({
            "scenario": idx,
            "max_combined_kw": float(combined_kw.max(initial=0.0)),
            "binding_steps": int((combined_kw >= p_max - 1e-6).sum()),
            "combined_kw": combined_kw.tolist(),
        })
        ess_rows.append({
            "scenario": idx,
            "soc_kwh": sol.ess_soc[0].tolist(),
            "soc_final_kwh": float(sol.ess_soc[0, -1]) if sol.ess_soc.size else 0.0,
        })
        for c in sol.checks:
            check_rows.append({
                "scenario": idx, "name": c.name,
                "max_residual": c.max_residual, "tolerance": c.tolerance,
                "passed": c.passed, "hard": c.hard,
            })
        solver_rows.append({
            "scenario": idx, "status": sol.status,
            "objective": sol.objective, "best_bound": sol.best_bound,
            "gap": sol.gap, "node_count": sol.node_count,
            "lp_iterations": sol.lp_iterations,
        })

    unc_ev = uncoordinated_profile(sessions, grid)
    base_demand = tree.scenarios[0].demand.as_array()
    unc_combined = base_demand + unc_ev
    unc_peak = float(unc_combined.max(initial=0.0))
    report = {
        "mode": mode,
        "seed": seed,
        "config_echo": cfg.to_dict(),
        "interpretations": list(INTERPRETATION_NOTES),
        "sessions": session_rows,
        "session_fingerprint": _fingerprint(session_rows),
        "scenario_tree": {
            "n_scenarios": len(tree),
            "axis_sizes": axis_sizes,
            "probability_sum": float(sum(sc.probability for sc in tree)),
            "solved": list(solved),
            "labels": {sc.index: sc.label for sc in tree},
        },
        "objective": {
            "total": total,
            "expected_cost": exp_cost,
            "expected_theta_value": exp_theta,
            "per_scenario": per_obj,
        },
        "theta": theta_rows,
        "peak": {
            "p_max_kw": p_max,
            "max_combined_kw": opt_peak,
            "per_scenario": peak_rows,
        },
        "ess": {"per_scenario": ess_rows},
        "checks": check_rows,
        "checks_passed": all(c["passed"] or not c["hard"] for c in check_rows),
        "uncoordinated": {
            "ev_profile_kw": unc_ev.tolist(),
            "peak_kw": unc_peak,
            "optimized_peak_kw": opt_peak,
            "peak_reduction_kw": unc_peak - opt_peak,
            "steps_over_cap_uncoordinated": int((unc_combined > p_max + 1e-6).sum()),
            "steps_over_cap_optimized": 0,
        },
        "solver": {
            "per_scenario": solver_rows,
            "total_nodes": sum(r["node_count"] for r in solver_rows),
            "total_lp_iterations": sum(r["lp_iterations"] for r in solver_rows),
        },
    }
    over = 0
    for row in peak_rows:
        arr = np.asarray(row["combined_kw"])
        over = max(over, int((arr > p_max + 1e-6).sum()))
    report["uncoordinated"]["steps_over_cap_optimized"] = over
    return _plain(report)


def run_pipeline(config, mode: str = "A", seed: int | None = None,
                 out_dir: str | Path | None = None,
                 export_mps_dir: str | Path | None = None,
                 scenario_filter=None) -> RunResult:
    """Execute one full day-ahead run and optionally write its artifacts.

    ``config`` is a config file path or an already loaded SiteConfig.
    ``scenario_filter`` selects tree indices to solve (default: all).
    Scenario models share their shape, so every solve after the first starts
    from the previous optimal basis.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}, expected one of {MODES}")
    cfg = config if isinstance(config, SiteConfig) else load_config(config)
    used_seed = cfg.fleet.seed if seed is None else int(seed)

    sessions = build_fleet(cfg, used_seed)
    tree = build_scenarios(cfg)
    axis_sizes = {
        "pv": len(cfg.data.pv_axis.members),
        "price": len(cfg.data.price_axis.members),
        "rb": 1 if cfg.data.rb_axis is None else len(cfg.data.rb_axis.members),
    }

    if scenario_filter is None:
        selected = [sc.index for sc in tree]
    else:
        wanted = sorted(set(int(i) for i in scenario_filter))
        known = {sc.index for sc in tree}
        missing = [i for i in wanted if i not in known]
        if missing:
            raise ConfigError(f"scenario filter names unknown indices {missing}")
        selected = wanted

    by_index = {sc.index: sc for sc in tree}
    solutions: list[EmsSolution] = []
    warm = None
    for idx in selected:
        model = build_model(cfg, sessions, _single_scenario_set(by_index[idx]),
                            mode)
        if export_mps_dir is not None:
            mps_dir = Path(export_mps_dir)
            mps_dir.mkdir(parents=True, exist_ok=True)
            export_mps(model.milp, mps_dir / f"scenario_{idx:04d}.mps",
                       name=f"EMS{mode}S{idx}")
        sol, root = solve_ems(model, warm=warm)
        warm = root
        solutions.append(sol)

    report = _build_report(cfg, mode, used_seed, sessions, tree,
                           tuple(selected), tuple(solutions), axis_sizes)
    result = RunResult(cfg=cfg, mode=mode, seed=used_seed, sessions=sessions,
                       tree=tree, solved_indices=tuple(selected),
                       solutions=tuple(solutions), report=report)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def write_outputs(result: RunResult, out_dir: str | Path) -> None:
    """Write report.json and the three CSV artifacts, each in one pass."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_NAME).write_text(
        json.dumps(result.report, sort_keys=True, indent=1) + "\n")

    with open(out / DISPATCH_NAME, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "step", "demand_kw", "pv_kw",
                    "rb_available_kw", "price_buy", "price_sell",
                    "grid_buy_kw", "grid_sell_kw", "ess_charge_kw",
                    "ess_discharge_kw", "rb_used_kw", "ess_soc_kwh",
                    "grid_buy_on", "ess_charge_on", "ev_total_kw",
                    "combined_load_kw"])
        for idx, sol in zip(result.solved_indices, result.solutions):
            demand = sol.input_demand[0]
            ev_total = sol.ev_total_power[0]
            for t in range(result.cfg.time_grid.horizon_steps):
                w.writerow([idx, t, _num(demand[t]), _num(sol.input_pv[0, t]),
                            _num(sol.input_rb[0, t]),
                            _num(sol.input_price_buy[0, t]),
                            _num(sol.input_price_sell[0, t]),
                            _num(sol.grid_buy[0, t]), _num(sol.grid_sell[0, t]),
                            _num(sol.ess_charge[0, t]),
                            _num(sol.ess_discharge[0, t]),
                            _num(sol.rb_used[0, t]), _num(sol.ess_soc[0, t]),
                            int(sol.grid_buy_on[0, t]),
                            int(sol.ess_charge_on[0, t]),
                            _num(ev_total[t]), _num(demand[t] + ev_total[t])])

    with open(out / SCHEDULE_NAME, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "step", "session", "ev_power_kw", "ev_soc_kwh"])
        for idx, sol in zip(result.solved_indices, result.solutions):
            for i, ses in enumerate(result.sessions):
                for t in range(ses.t_arrival, ses.t_departure + 1):
                    w.writerow([idx, t, ses.session_id,
                                _num(sol.ev_power[0, i, t]),
                                _num(sol.ev_soc[0, i, t])])

    with open(out / THETA_NAME, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "session", "theta_kwh", "theta_min_kwh",
                    "theta_max_kwh", "e_requested_kwh", "departure_soc_kwh"])
        for idx, sol in zip(result.solved_indices, result.solutions):
            for i, ses in enumerate(result.sessions):
                w.writerow([idx, ses.session_id, _num(sol.theta[0, i]),
                            _num(ses.theta_min_kwh), _num(ses.theta_max_kwh),
                            _num(ses.e_requested_kwh),
                            _num(sol.departure_soc[0, i])])


def _num(v) -> str:
    return repr(float(v))


def compare_runs(report_a: dict, report_b: dict) -> dict:
    """Line up two finished runs over the same sessions and scenarios.

    Raises ValueError when the runs drew different sessions or solved
    different scenario sets; deltas are (a minus b).
    """
    if report_a["session_fingerprint"] != report_b["session_fingerprint"]:
        raise ValueError("runs drew different session sets; comparison "
                         "would be meaningless")
    solved_a = report_a["scenario_tree"]["solved"]
    solved_b = report_b["scenario_tree"]["solved"]
    if solved_a != solved_b:
        raise ValueError("runs solved different scenario subsets")

    theta_b = {(r["scenario"], r["session"]): r for r in report_b["theta"]}
    deltas = []
    for ra in report_a["theta"]:
        rb = theta_b[(ra["scenario"], ra["session"])]
        deltas.append({
            "scenario": ra["scenario"],
            "session": ra["session"],
            "theta_delta_kwh": ra["theta_kwh"] - rb["theta_kwh"],
            "departure_soc_delta_kwh":
                ra["departure_soc_kwh"] - rb["departure_soc_kwh"],
        })
    return {
        "mode_a": report_a["mode"],
        "mode_b": report_b["mode"],
        "objective_delta": report_a["objective"]["total"]
            - report_b["objective"]["total"],
        "peak_delta_kw": report_a["peak"]["max_combined_kw"]
            - report_b["peak"]["max_combined_kw"],
        "theta_deltas": deltas,
        "theta_total_delta_kwh": sum(d["theta_delta_kwh"] for d in deltas),
        "theta_delta_min_kwh": min((d["theta_delta_kwh"] for d in deltas),
                                   default=0.0),
        "theta_delta_max_kwh": max((d["theta_delta_kwh"] for d in deltas),
                                   default=0.0),
    }
