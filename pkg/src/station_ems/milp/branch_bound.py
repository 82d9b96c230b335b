"""Branch and bound for mixed-binary programs.

Best-bound search over binary fixings.  A popped node is solved lazily (its
heap key is the parent's bound, which never overestimates the child), warm
starting the simplex from the parent's basis.  Branching picks the binary
closest to one half, lowest column index on ties, and an optional repair
callback may turn any fractional relaxation point into a feasible incumbent.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .canonical import (
    CanonicalMilp,
    MipSolution,
    ROW_EQ,
    ROW_GE,
    ROW_LE,
    STATUS_FAILED,
    STATUS_INFEASIBLE,
    STATUS_LIMIT,
    STATUS_OPTIMAL,
    STATUS_UNBOUNDED,
    feasibility_report,
)
from .simplex import solve_lp

RepairFn = Callable[[CanonicalMilp, np.ndarray], np.ndarray | None]

_IMPROVE_TOL = 1e-12
_MOVE_TOL = 1e-9


def _row_rooms(milp: CanonicalMilp, act: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per row: how much its activity may rise or fall from ``act``."""
    inc = np.full(milp.n_rows, np.inf)
    dec = np.full(milp.n_rows, np.inf)
    for i, sense in enumerate(milp.row_sense):
        if sense == ROW_LE:
            inc[i] = max(milp.row_rhs[i] - act[i], 0.0)
        elif sense == ROW_GE:
            dec[i] = max(act[i] - milp.row_rhs[i], 0.0)
        else:
            inc[i] = 0.0
            dec[i] = 0.0
    return inc, dec


def _binary_moves(milp: CanonicalMilp, x: np.ndarray, bin_idx: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Which fractional binaries could reach 1 (or 0) on their own.

    A move holds every other variable fixed, so a binary that can reach a
    bound this way is harmless to round, while one pinned from both sides is
    a genuine conflict worth branching on.
    """
    indptr, rows, vals = milp.columns_csc()
    inc_room, dec_room = _row_rooms(milp, milp.row_activity(x))
    up_ok = np.zeros(len(bin_idx), dtype=bool)
    dn_ok = np.zeros(len(bin_idx), dtype=bool)
    for k, j in enumerate(bin_idx):
        xj = x[j]
        du = dd = np.inf
        for p in range(indptr[j], indptr[j + 1]):
            i, a = rows[p], vals[p]
            if a > 0.0:
                du = min(du, inc_room[i] / a)
                dd = min(dd, dec_room[i] / a)
            elif a < 0.0:
                du = min(du, dec_room[i] / -a)
                dd = min(dd, inc_room[i] / -a)
        up_ok[k] = du >= (1.0 - xj) - _MOVE_TOL
        dn_ok[k] = dd >= xj - _MOVE_TOL
    return up_ok, dn_ok


def _round_binaries(milp: CanonicalMilp, x: np.ndarray, bin_idx: np.ndarray
                    ) -> np.ndarray | None:
    """Round every binary to a bound without touching the continuous part.

    Processes binaries in column order, consuming row slack as it goes, and
    gives up when some binary cannot reach either bound.
    """
    if not len(bin_idx):
        return x.copy()
    indptr, rows, vals = milp.columns_csc()
    inc_room, dec_room = _row_rooms(milp, milp.row_activity(x))
    y = x.copy()
    for j in bin_idx:
        xj = y[j]
        du = dd = np.inf
        lo, hi = indptr[j], indptr[j + 1]
        for p in range(lo, hi):
            i, a = rows[p], vals[p]
            if a > 0.0:
                du = min(du, inc_room[i] / a)
                dd = min(dd, dec_room[i] / a)
            elif a < 0.0:
                du = min(du, dec_room[i] / -a)
                dd = min(dd, inc_room[i] / -a)
        prefer = 1.0 if xj >= 0.5 else 0.0
        chosen = None
        for target in (prefer, 1.0 - prefer):
            delta = target - xj
            if delta >= 0.0 and du >= delta - _MOVE_TOL:
                chosen = target
                break
            if delta < 0.0 and dd >= -delta - _MOVE_TOL:
                chosen = target
                break
        if chosen is None:
            return None
        delta = chosen - xj
        y[j] = chosen
        if delta != 0.0:
            for p in range(lo, hi):
                i, a = rows[p], vals[p]
                shift = a * delta
                if shift > 0.0:
                    inc_room[i] = max(inc_room[i] - shift, 0.0)
                    if np.isfinite(dec_room[i]):
                        dec_room[i] += shift
                elif shift < 0.0:
                    dec_room[i] = max(dec_room[i] + shift, 0.0)
                    if np.isfinite(inc_room[i]):
                        inc_room[i] -= shift
    return y


@dataclass(order=True)
class _Node:
    bound_key: float
    node_id: int
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    basis: np.ndarray | None = field(compare=False, default=None)
    at_upper: np.ndarray | None = field(compare=False, default=None)


def solve_mip(milp: CanonicalMilp, *,
              rel_gap: float = 1e-6,
              integrality_tol: float = 1e-7,
              max_nodes: int = 200_000,
              incumbent_x: np.ndarray | None = None,
              repair: RepairFn | None = None,
              lp_max_iterations: int | None = None) -> MipSolution:
    """Solve a mixed-binary minimisation to the requested relative gap.

    ``incumbent_x`` seeds the search with a known feasible point (it is
    re-checked before being trusted).  ``repair`` is called on fractional
    relaxation points and may return a feasible candidate or None.
    """
    bin_idx = np.flatnonzero(milp.col_binary)

    incumbent: np.ndarray | None = None
    inc_obj = np.inf
    if incumbent_x is not None:
        cand = np.asarray(incumbent_x, dtype=float)
        if feasibility_report(milp, cand, integrality_tol=integrality_tol)["feasible"]:
            incumbent = cand.copy()
            inc_obj = milp.objective_value(cand)

    root = _Node(-np.inf, 0, milp.col_lb.copy(), milp.col_ub.copy())
    heap: list[_Node] = [root]
    next_id = 1
    nodes_solved = 0
    lp_iterations = 0
    closed_low = np.inf  # tightest bound among subtrees closed by the gap rule

    def allowed_gap(obj: float) -> float:
        return rel_gap * max(1.0, abs(obj))

    def finish(status: str, bound: float) -> MipSolution:
        bound = min(bound, closed_low)
        if incumbent is None:
            return MipSolution(status, None, np.inf, bound, np.inf,
                               nodes_solved, lp_iterations)
        bound = min(bound, inc_obj)
        gap = max(0.0, inc_obj - bound) / max(1.0, abs(inc_obj))
        return MipSolution(status, incumbent, inc_obj, bound, gap,
                           nodes_solved, lp_iterations)

    def offer(cand: np.ndarray) -> float | None:
        """Admit a candidate if it verifies; returns its objective if feasible."""
        nonlocal incumbent, inc_obj
        if not feasibility_report(milp, cand,
                                  integrality_tol=integrality_tol)["feasible"]:
            return None
        obj = milp.objective_value(cand)
        if obj < inc_obj - _IMPROVE_TOL:
            incumbent = cand.copy()
            inc_obj = obj
        return obj

    while heap:
        node = heapq.heappop(heap)
        remaining_low = heap[0].bound_key if heap else np.inf
        if incumbent is not None and node.bound_key >= inc_obj - allowed_gap(inc_obj):
            return finish(STATUS_OPTIMAL, min(node.bound_key, remaining_low, inc_obj))

        if nodes_solved >= max_nodes:
            return finish(STATUS_LIMIT, min(node.bound_key, remaining_low))
        nodes_solved += 1

        sol = solve_lp(milp, node.lb, node.ub,
                       warm_basis=node.basis, warm_at_upper=node.at_upper,
                       max_iterations=lp_max_iterations)
        lp_iterations += sol.iterations

        if sol.status == STATUS_UNBOUNDED:
            return MipSolution(STATUS_UNBOUNDED, None, -np.inf, -np.inf,
                               np.inf, nodes_solved, lp_iterations)
        if sol.status == STATUS_FAILED or sol.status == STATUS_LIMIT:
            return finish(STATUS_FAILED, min(node.bound_key, remaining_low))
        if sol.status != STATUS_OPTIMAL:
            continue  # infeasible subtree

        bound = sol.objective
        if incumbent is not None and bound >= inc_obj - allowed_gap(inc_obj):
            closed_low = min(closed_low, bound)
            continue

        frac = np.abs(sol.x[bin_idx] - np.round(sol.x[bin_idx])) if len(bin_idx) else np.empty(0)
        if not len(frac) or frac.max() <= integrality_tol:
            snapped = sol.x.copy()
            if len(bin_idx):
                snapped[bin_idx] = np.round(snapped[bin_idx])
            got = offer(snapped)
            if got is None:
                got = offer(sol.x)
            lower = min(remaining_low, inc_obj)
            if incumbent is not None and inc_obj - lower <= allowed_gap(inc_obj):
                return finish(STATUS_OPTIMAL, lower)
            if got is not None:
                closed_low = min(closed_low, bound)
            continue

        # a repaired or rounded point matching this node's own bound settles
        # the whole subtree, whatever the global gap still is
        cand = repair(milp, sol.x) if repair is not None else None
        if cand is None:
            cand = _round_binaries(milp, sol.x, bin_idx)
        cand_obj = offer(np.asarray(cand, dtype=float)) if cand is not None else None
        if incumbent is not None:
            lower = min(bound, remaining_low)
            if inc_obj - lower <= allowed_gap(inc_obj):
                return finish(STATUS_OPTIMAL, lower)
        if cand_obj is not None and \
                cand_obj - bound <= rel_gap * max(1.0, abs(bound)):
            closed_low = min(closed_low, bound)
            continue

        is_frac = frac > integrality_tol
        up_ok, dn_ok = _binary_moves(milp, sol.x, bin_idx)
        stuck = is_frac & ~up_ok & ~dn_ok
        pool = stuck if stuck.any() else is_frac
        scores = np.where(pool, np.abs(sol.x[bin_idx] - 0.5), np.inf)
        branch_col = int(bin_idx[int(np.argmin(scores))])

        for fix in (0.0, 1.0):
            child_lb = node.lb.copy()
            child_ub = node.ub.copy()
            child_lb[branch_col] = fix
            child_ub[branch_col] = fix
            heapq.heappush(heap, _Node(bound, next_id, child_lb, child_ub,
                                       basis=sol.basis, at_upper=sol.nonbasic_at_upper))
            next_id += 1

    if incumbent is not None:
        return finish(STATUS_OPTIMAL, inc_obj)
    return MipSolution(STATUS_INFEASIBLE, None, np.inf, np.inf, np.inf,
                       nodes_solved, lp_iterations)


def brute_force_mip(milp: CanonicalMilp, max_binaries: int = 20) -> MipSolution:
    """Exhaustively enumerate every binary assignment and solve each LP.

    Reference oracle for small models; assignments are visited in
    lexicographic order and the first optimum found wins ties.
    """
    bin_idx = np.flatnonzero(milp.col_binary)
    if len(bin_idx) > max_binaries:
        raise ValueError(f"{len(bin_idx)} binaries exceed the brute-force cap "
                         f"of {max_binaries}")

    best_x: np.ndarray | None = None
    best_obj = np.inf
    lp_iterations = 0
    n_solved = 0

    for assign in itertools.product((0.0, 1.0), repeat=len(bin_idx)):
        lb = milp.col_lb.copy()
        ub = milp.col_ub.copy()
        if len(bin_idx):
            lb[bin_idx] = assign
            ub[bin_idx] = assign
        sol = solve_lp(milp, lb, ub)
        lp_iterations += sol.iterations
        n_solved += 1
        if sol.status == STATUS_UNBOUNDED:
            return MipSolution(STATUS_UNBOUNDED, None, -np.inf, -np.inf,
                               np.inf, n_solved, lp_iterations)
        if sol.status == STATUS_OPTIMAL and sol.objective < best_obj - 1e-9:
            best_obj = sol.objective
            best_x = sol.x.copy()
            if len(bin_idx):
                best_x[bin_idx] = np.asarray(assign)

    if best_x is None:
        return MipSolution(STATUS_INFEASIBLE, None, np.inf, np.inf, np.inf,
                           n_solved, lp_iterations)
    return MipSolution(STATUS_OPTIMAL, best_x, best_obj, best_obj, 0.0,
                       n_solved, lp_iterations)
