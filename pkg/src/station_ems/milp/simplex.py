"""Bounded-variable revised simplex.

Rows are turned into equalities with one slack each; the initial basis is the
slack identity.  Phase 1 minimises the total bound violation of the basic
variables directly (piecewise-linear costs, no artificial columns), so any
basis, warm-started or not, is a legal starting point.  The basis inverse is
kept explicitly and refreshed periodically; Dantzig pricing switches to
Bland's rule after a degenerate stall to break cycles.
"""
from __future__ import annotations

import numpy as np

from .canonical import (
    CanonicalMilp,
    LpSolution,
    ROW_GE,
    ROW_LE,
    STATUS_FAILED,
    STATUS_INFEASIBLE,
    STATUS_LIMIT,
    STATUS_OPTIMAL,
    STATUS_UNBOUNDED,
)

_NB_LB = 0
_NB_UB = 1
_BASIC = 2
_NB_FREE = 3

_TOL_PIVOT = 1e-9
_TOL_BOUND = 1e-9
_DEGENERATE_STALL = 400
_REFACTOR_EVERY = 256


def solve_lp(milp: CanonicalMilp,
             lb: np.ndarray | None = None,
             ub: np.ndarray | None = None,
             warm_basis: np.ndarray | None = None,
             warm_at_upper: np.ndarray | None = None,
             max_iterations: int | None = None) -> LpSolution:
    """Solve the LP relaxation (binaries treated as continuous in [lb, ub]).

    ``lb``/``ub`` override the stored column bounds (used by the tree search
    to fix binaries).  A warm basis is tried as the starting point and
    silently replaced by the slack basis if it is unusable.
    """
    solver = _Simplex(milp, lb, ub, max_iterations)
    return solver.run(warm_basis, warm_at_upper)


class _Simplex:
    def __init__(self, milp: CanonicalMilp, lb, ub, max_iterations):
        self.milp = milp
        n, m = milp.n_cols, milp.n_rows
        self.n, self.m = n, m
        struct_lb = milp.col_lb if lb is None else np.asarray(lb, dtype=float)
        struct_ub = milp.col_ub if ub is None else np.asarray(ub, dtype=float)

        slack_lb = np.zeros(m)
        slack_ub = np.zeros(m)
        for i, sense in enumerate(milp.row_sense):
            if sense == ROW_LE:
                slack_lb[i], slack_ub[i] = 0.0, np.inf
            elif sense == ROW_GE:
                slack_lb[i], slack_ub[i] = -np.inf, 0.0
            else:
                slack_lb[i], slack_ub[i] = 0.0, 0.0

        self.lb = np.concatenate([struct_lb, slack_lb])
        self.ub = np.concatenate([struct_ub, slack_ub])
        self.cost2 = np.concatenate([milp.col_obj, np.zeros(m)])
        self.b = milp.row_rhs.astype(float)
        self.indptr, self.row_idx, self.col_vals = milp.columns_csc()
        self.a_rows = milp.a_rows
        self.a_cols = milp.a_cols
        self.a_vals = milp.a_vals
        self.max_iterations = (max_iterations if max_iterations is not None
                               else 50_000 + 40 * (n + m))
        self.iterations = 0
        self.b_scale = 1.0 + (np.abs(self.b).max() if m else 0.0)

    # -- column access -------------------------------------------------------

    def _column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        if j < self.n:
            lo, hi = self.indptr[j], self.indptr[j + 1]
            return self.row_idx[lo:hi], self.col_vals[lo:hi]
        return (np.array([j - self.n], dtype=np.int64), np.array([1.0]))

    def _full_activity(self, x: np.ndarray) -> np.ndarray:
        act = np.zeros(self.m)
        if len(self.a_rows):
            np.add.at(act, self.a_rows, self.a_vals * x[self.a_cols])
        act += x[self.n:]
        return act

    # -- start bases ---------------------------------------------------------

    def _nearest_bound_state(self, j: int) -> int:
        lo, hi = self.lb[j], self.ub[j]
        if np.isfinite(lo) and np.isfinite(hi):
            return _NB_LB if abs(lo) <= abs(hi) else _NB_UB
        if np.isfinite(lo):
            return _NB_LB
        if np.isfinite(hi):
            return _NB_UB
        return _NB_FREE

    def _value_of_state(self, j: int, state: int) -> float:
        if state == _NB_LB:
            return self.lb[j]
        if state == _NB_UB:
            return self.ub[j]
        return 0.0

    def _cold_start(self) -> None:
        total = self.n + self.m
        self.state = np.empty(total, dtype=np.int8)
        self.x = np.zeros(total)
        for j in range(self.n):
            st = self._nearest_bound_state(j)
            self.state[j] = st
            self.x[j] = self._value_of_state(j, st)
        self.basis = np.arange(self.n, total, dtype=np.int64)
        self.state[self.basis] = _BASIC
        self.b_inv = np.eye(self.m)
        self._recompute_basics()

    def _warm_start(self, basis: np.ndarray, at_upper: np.ndarray | None) -> bool:
        basis = np.asarray(basis, dtype=np.int64)
        total = self.n + self.m
        if (len(basis) != self.m or len(np.unique(basis)) != self.m
                or (self.m and (basis.min() < 0 or basis.max() >= total))):
            return False
        self.state = np.empty(total, dtype=np.int8)
        self.x = np.zeros(total)
        upper = np.zeros(total, dtype=bool) if at_upper is None else at_upper
        for j in range(total):
            lo, hi = self.lb[j], self.ub[j]
            if j < len(upper) and upper[j] and np.isfinite(hi):
                st = _NB_UB
            elif np.isfinite(lo):
                st = _NB_LB
            elif np.isfinite(hi):
                st = _NB_UB
            else:
                st = _NB_FREE
            self.state[j] = st
            self.x[j] = self._value_of_state(j, st)
        self.basis = basis.copy()
        self.state[self.basis] = _BASIC
        try:
            return self._refactor()
        except FloatingPointError:
            return False

    def _recompute_basics(self) -> None:
        self.x[self.basis] = 0.0
        rhs_eff = self.b - self._full_activity(self.x)
        self.x[self.basis] = self.b_inv @ rhs_eff
        if not np.all(np.isfinite(self.x[self.basis])):
            raise FloatingPointError("basic solution is not finite")

    def _refactor(self) -> bool:
        mat = np.zeros((self.m, self.m))
        for k, j in enumerate(self.basis):
            rows, vals = self._column(int(j))
            mat[rows, k] = vals
        try:
            self.b_inv = np.linalg.inv(mat)
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(self.b_inv)):
            return False
        self._recompute_basics()
        return True

    # -- main loop -----------------------------------------------------------

    def run(self, warm_basis, warm_at_upper) -> LpSolution:
        if self.m == 0:
            return self._solve_unconstrained()
        try:
            started = warm_basis is not None and self._warm_start(warm_basis, warm_at_upper)
            if not started:
                self._cold_start()

            status = self._iterate(phase_one=True)
            if status != STATUS_OPTIMAL:
                return self._finish(status)
            if self._total_violation() > 1e-7 * self.b_scale:
                return self._finish(STATUS_INFEASIBLE)

            for _ in range(4):
                status = self._iterate(phase_one=False)
                if status != STATUS_OPTIMAL:
                    return self._finish(status)
                if self._solution_clean():
                    return self._finish(STATUS_OPTIMAL)
                if not self._refactor():
                    return self._finish(STATUS_FAILED)
            return self._finish(STATUS_FAILED)
        except FloatingPointError:
            return self._finish(STATUS_FAILED)

    def _solve_unconstrained(self) -> LpSolution:
        if np.any(self.lb[:self.n] > self.ub[:self.n]):
            return LpSolution(STATUS_INFEASIBLE, None, np.inf, 0)
        x = np.zeros(self.n)
        for j in range(self.n):
            c = self.cost2[j]
            if c > 0:
                if not np.isfinite(self.lb[j]):
                    return LpSolution(STATUS_UNBOUNDED, None, -np.inf, 0)
                x[j] = self.lb[j]
            elif c < 0:
                if not np.isfinite(self.ub[j]):
                    return LpSolution(STATUS_UNBOUNDED, None, -np.inf, 0)
                x[j] = self.ub[j]
            else:
                x[j] = self.lb[j] if np.isfinite(self.lb[j]) else (
                    self.ub[j] if np.isfinite(self.ub[j]) else 0.0)
        obj = float(self.milp.col_obj @ x)
        return LpSolution(STATUS_OPTIMAL, x, obj, 0,
                          basis=np.empty(0, dtype=np.int64),
                          nonbasic_at_upper=np.zeros(self.n + self.m, dtype=bool))

    def _total_violation(self) -> float:
        xB = self.x[self.basis]
        over = np.clip(xB - self.ub[self.basis], 0.0, None)
        under = np.clip(self.lb[self.basis] - xB, 0.0, None)
        return float(np.sum(over) + np.sum(under))

    def _solution_clean(self) -> bool:
        xB = self.x[self.basis]
        scale = 1.0 + np.maximum(
            np.abs(np.where(np.isfinite(self.lb[self.basis]), self.lb[self.basis], 0.0)),
            np.abs(np.where(np.isfinite(self.ub[self.basis]), self.ub[self.basis], 0.0)))
        over = np.clip(xB - self.ub[self.basis], 0.0, None)
        under = np.clip(self.lb[self.basis] - xB, 0.0, None)
        if np.any(np.maximum(over, under) > 1e-7 * scale):
            return False
        resid = np.abs(self._full_activity(self.x) - self.b)
        return bool(np.all(resid <= 1e-8 * (1.0 + np.abs(self.b))))

    def _phase1_costs(self) -> np.ndarray:
        cB = np.zeros(self.m)
        xB = self.x[self.basis]
        cB[xB > self.ub[self.basis] + _TOL_BOUND] = 1.0
        cB[xB < self.lb[self.basis] - _TOL_BOUND] = -1.0
        return cB

    def _iterate(self, phase_one: bool) -> str:
        n = self.n
        bland = False
        stall = 0
        pivots_since_refactor = 0
        tol_d2 = 1e-9 * (1.0 + np.abs(self.cost2).max(initial=0.0))

        while True:
            if self.iterations >= self.max_iterations:
                return STATUS_LIMIT
            self.iterations += 1

            if phase_one:
                cB = self._phase1_costs()
                if not np.any(cB):
                    return STATUS_OPTIMAL
                c_eff = None  # nonbasic phase-1 costs are all zero
                tol_d = 1e-9
            else:
                cB = self.cost2[self.basis]
                c_eff = self.cost2
                tol_d = tol_d2

            y = cB @ self.b_inv
            if len(self.a_rows):
                aty = np.bincount(self.a_cols, weights=self.a_vals * y[self.a_rows],
                                  minlength=n)
            else:
                aty = np.zeros(n)
            d = np.concatenate([-aty, -y])
            if c_eff is not None:
                d += c_eff

            state = self.state
            fixed = self.lb >= self.ub  # equality slacks and pinned columns
            can_up = (state == _NB_LB) & ~fixed & (d < -tol_d)
            can_dn = (state == _NB_UB) & ~fixed & (d > tol_d)
            free_m = (state == _NB_FREE) & (np.abs(d) > tol_d)
            eligible = can_up | can_dn | free_m
            if not np.any(eligible):
                return STATUS_OPTIMAL

            if bland:
                q = int(np.flatnonzero(eligible)[0])
            else:
                score = np.where(eligible, np.abs(d), -1.0)
                q = int(np.argmax(score))
            sigma = 1.0 if (can_up[q] or (free_m[q] and d[q] < 0)) else -1.0

            rows_q, vals_q = self._column(q)
            w = self.b_inv[:, rows_q] @ vals_q

            step, k_leave, flip, leave_at_ub = self._ratio_test(
                q, sigma, w, phase_one, bland)
            if step is None:
                return STATUS_FAILED if phase_one else STATUS_UNBOUNDED

            if step <= 1e-10:
                stall += 1
                if stall > _DEGENERATE_STALL:
                    bland = True
            else:
                stall = 0
                bland = False

            self.x[self.basis] -= sigma * step * w
            self.x[q] += sigma * step

            if flip:
                self.state[q] = _NB_UB if self.state[q] == _NB_LB else _NB_LB
                self.x[q] = self._value_of_state(q, self.state[q])
                continue

            j_leave = int(self.basis[k_leave])
            self.state[j_leave] = _NB_UB if leave_at_ub else _NB_LB
            self.x[j_leave] = self._value_of_state(j_leave, self.state[j_leave])
            self.basis[k_leave] = q
            self.state[q] = _BASIC
            # keep the entering value inside its own range despite fp drift
            if np.isfinite(self.ub[q]) and self.x[q] > self.ub[q]:
                self.x[q] = self.ub[q]
            if np.isfinite(self.lb[q]) and self.x[q] < self.lb[q]:
                self.x[q] = self.lb[q]

            if abs(w[k_leave]) < 1e-7:
                # pivot too small for a stable rank-1 update; rebuild instead
                if not self._refactor():
                    return STATUS_FAILED
                pivots_since_refactor = 0
                continue

            piv = self.b_inv[k_leave] / w[k_leave]
            self.b_inv -= np.outer(w, piv)
            self.b_inv[k_leave] = piv

            pivots_since_refactor += 1
            if pivots_since_refactor >= _REFACTOR_EVERY:
                if not self._refactor():
                    return STATUS_FAILED
                pivots_since_refactor = 0

    def _ratio_test(self, q: int, sigma: float, w: np.ndarray,
                    phase_one: bool, bland: bool):
        """Largest step for the entering column.

        Returns ``(step, leaving_position, flip, leave_at_ub)``; ``step`` is
        None when nothing blocks (unbounded direction).  Basic variables
        block at the bound they are moving toward; in phase 1 a variable
        beyond a bound blocks only when re-entering its range, while in
        phase 2 such a stray blocks immediately so feasibility cannot erode.
        """
        basis = self.basis
        xB = self.x[basis]
        lbB = self.lb[basis]
        ubB = self.ub[basis]
        rho = -sigma * w

        with np.errstate(divide="ignore", invalid="ignore"):
            above = xB > ubB + _TOL_BOUND
            below = xB < lbB - _TOL_BOUND
            feas = ~above & ~below
            ratios = np.full(self.m, np.inf)
            hits_ub = np.zeros(self.m, dtype=bool)

            mask = feas & (rho > _TOL_PIVOT) & np.isfinite(ubB)
            ratios[mask] = (ubB[mask] - xB[mask]) / rho[mask]
            hits_ub[mask] = True
            mask = feas & (rho < -_TOL_PIVOT) & np.isfinite(lbB)
            ratios[mask] = (xB[mask] - lbB[mask]) / (-rho[mask])

            mask = above & (rho < -_TOL_PIVOT)
            ratios[mask] = (xB[mask] - ubB[mask]) / (-rho[mask])
            hits_ub[mask] = True
            mask = below & (rho > _TOL_PIVOT)
            ratios[mask] = (lbB[mask] - xB[mask]) / rho[mask]
            if not phase_one:
                mask = above & (rho > _TOL_PIVOT)
                ratios[mask] = 0.0
                hits_ub[mask] = True
                mask = below & (rho < -_TOL_PIVOT)
                ratios[mask] = 0.0

        np.clip(ratios, 0.0, None, out=ratios)

        if self.state[q] == _NB_FREE:
            own = np.inf
        else:
            own = self.ub[q] - self.lb[q]
            if not np.isfinite(own):
                own = np.inf

        best_row = float(ratios.min(initial=np.inf))
        step = min(best_row, own)
        if not np.isfinite(step):
            return None, None, False, False
        if own < best_row - 1e-12:
            return own, None, True, False

        cand = np.flatnonzero(ratios <= best_row + 1e-12 * (1.0 + best_row))
        if len(cand) == 0:
            return None, None, False, False
        if bland:
            k = int(cand[np.argmin(basis[cand])])
        else:
            k = int(cand[np.argmax(np.abs(rho[cand]))])
        return float(ratios[k]), k, False, bool(hits_ub[k])

    def _finish(self, status: str) -> LpSolution:
        if status != STATUS_OPTIMAL:
            obj = -np.inf if status == STATUS_UNBOUNDED else np.inf
            return LpSolution(status, None, obj, self.iterations)
        x_struct = self.x[:self.n].copy()
        obj = float(self.milp.col_obj @ x_struct)
        at_upper = self.state == _NB_UB
        return LpSolution(STATUS_OPTIMAL, x_struct, obj, self.iterations,
                          basis=self.basis.copy(), nonbasic_at_upper=at_upper)
