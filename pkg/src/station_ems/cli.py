"""Command-line front end: run, compare, and oracle subcommands.

Exit codes: 0 on success, 1 when a solve or a post-solve check fails, 2 for
usage and configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .milp import STATUS_OPTIMAL, brute_force_mip, solve_mip
from .model import (
    EmsSolveError,
    InfeasibleModelError,
    MODES,
    SolutionCheckError,
    build_model,
)
from .pipeline import REPORT_NAME, build_fleet, build_scenarios, compare_runs, \
    run_pipeline

_ORACLE_MAX_BINARIES = 20


def _parse_scenario_filter(text: str) -> list[int]:
    """Accept comma-separated indices and inclusive ranges, e.g. 0,2,5-8."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo_s, hi_s = part.split("-", 1)
            lo, hi = int(lo_s), int(hi_s)
            if hi < lo:
                raise ValueError(f"empty range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("scenario filter selects nothing")
    return out


def _cmd_run(args) -> int:
    filt = None
    if args.scenarios:
        filt = _parse_scenario_filter(args.scenarios)
    result = run_pipeline(args.config, mode=args.mode, seed=args.seed,
                          out_dir=args.out, export_mps_dir=args.export_mps,
                          scenario_filter=filt)
    rep = result.report
    if args.out is None:
        print(json.dumps(rep, sort_keys=True, indent=1))
    else:
        print(f"mode {rep['mode']} seed {rep['seed']}: "
              f"objective {rep['objective']['total']:.6f}")
        print(f"scenarios solved: {len(rep['scenario_tree']['solved'])} "
              f"of {rep['scenario_tree']['n_scenarios']}")
        print(f"peak: optimized {rep['peak']['max_combined_kw']:.3f} kW, "
              f"cap {rep['peak']['p_max_kw']:.3f} kW, "
              f"uncoordinated {rep['uncoordinated']['peak_kw']:.3f} kW")
        failed = [c["name"] for c in rep["checks"]
                  if c["hard"] and not c["passed"]]
        print("checks: all passed" if not failed
              else "checks FAILED: " + ", ".join(sorted(set(failed))))
        print(f"wrote {Path(args.out) / REPORT_NAME} and CSV artifacts")
    if not rep["checks_passed"]:
        return 1
    return 0


def _cmd_compare(args) -> int:
    reports = []
    for d in (args.run_dir_a, args.run_dir_b):
        path = Path(d) / REPORT_NAME
        if not path.is_file():
            raise ConfigError(f"no {REPORT_NAME} under {d}")
        reports.append(json.loads(path.read_text()))
    try:
        table = compare_runs(reports[0], reports[1])
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(table, sort_keys=True, indent=1))
    return 0


def _cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    sessions = build_fleet(cfg, cfg.fleet.seed)
    tree = build_scenarios(cfg)
    model = build_model(cfg, sessions, tree, mode="A")
    n_bin = int(model.milp.col_binary.sum())
    if n_bin > _ORACLE_MAX_BINARIES:
        print(f"error: model has {n_bin} binaries, oracle handles at most "
              f"{_ORACLE_MAX_BINARIES}; use a smaller config", file=sys.stderr)
        return 2
    exact = brute_force_mip(model.milp, max_binaries=_ORACLE_MAX_BINARIES)
    search = solve_mip(model.milp)
    print(f"brute force: status {exact.status}, objective {exact.objective!r}")
    print(f"tree search: status {search.status}, objective {search.objective!r}")
    if exact.status != search.status:
        print("status mismatch", file=sys.stderr)
        return 1
    if exact.status == STATUS_OPTIMAL:
        diff = abs(exact.objective - search.objective)
        rel = diff / max(1.0, abs(exact.objective))
        print(f"relative difference: {rel!r}")
        if rel > 1e-6:
            print("objectives disagree beyond 1e-6 relative", file=sys.stderr)
            return 1
    print("oracle agreement confirmed")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="station-ems",
        description="Day-ahead dispatch for a railway station with an EV lot")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve one day-ahead problem")
    run.add_argument("--config", required=True, help="config JSON path")
    run.add_argument("--mode", default="A", choices=list(MODES),
                     help="A full, B no storage, C no solar")
    run.add_argument("--seed", type=int, default=None,
                     help="fleet sampling seed (default: from config)")
    run.add_argument("--export-mps", default=None, metavar="DIR",
                     help="write one MPS file per solved scenario")
    run.add_argument("--scenarios", default=None,
                     help="subset of tree indices, e.g. 0,2,5-8")
    run.add_argument("--out", default=None, metavar="DIR",
                     help="write report.json and CSV artifacts here")
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare", help="diff two finished run directories")
    cmp_.add_argument("run_dir_a")
    cmp_.add_argument("run_dir_b")
    cmp_.set_defaults(func=_cmd_compare)

    orc = sub.add_parser("oracle",
                         help="exhaustive check against the tree search "
                              "(small configs only)")
    orc.add_argument("--config", required=True, help="config JSON path")
    orc.set_defaults(func=_cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InfeasibleModelError, EmsSolveError, SolutionCheckError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
