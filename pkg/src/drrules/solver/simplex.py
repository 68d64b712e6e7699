"""Dense bounded-variable revised simplex.

Every row gets a slack so the working system is ``A x + s = b`` with bounded
``x`` and ``s``.  Rows whose slack cannot absorb the initial residual receive
an artificial column for phase one.  The basis inverse is kept explicitly and
refactorized periodically.  Dantzig pricing is used until a run of degenerate
pivots is seen, after which Bland's rule takes over until progress resumes.
"""

from __future__ import annotations

import time
from typing import Optional

import numpy as np

from .problem import (
    FEAS_TOL,
    INFEASIBLE,
    LIMIT,
    OPTIMAL,
    UNBOUNDED,
    LpProblem,
    LpSolution,
    SolverError,
)

_PIVOT_TOL = 1e-9
_OPT_TOL = 1e-9
_REFACTOR_EVERY = 64
_DEGENERATE_SWITCH = 30

# nonbasic state codes
_AT_LB, _AT_UB, _FREE_ZERO, _BASIC = 0, 1, 2, 3


class SimplexSolver:
    """Stateful solver so columns can be appended and re-solved warm.

    >>> p = LpProblem(c=[1.0], A=[[1.0]], senses=["<="], b=[3.0], maximize=True)
    >>> s = SimplexSolver(p).solve()
    >>> float(s.x[0]), float(s.duals[0])
    (3.0, 1.0)
    """

    def __init__(self, problem: LpProblem, max_iter: int = 50_000, time_limit: Optional[float] = None):
        self.problem = problem
        self.max_iter = max_iter
        self.time_limit = time_limit
        self.n = problem.n_vars
        self.m = problem.n_rows
        self._build()

    # ------------------------------------------------------------------ setup
    def _build(self):
        p = self.problem
        m, n = self.m, self.n
        sign = -1.0 if p.maximize else 1.0
        slack_lb = np.empty(m)
        slack_ub = np.empty(m)
        for i, s in enumerate(p.senses):
            if s == "<=":
                slack_lb[i], slack_ub[i] = 0.0, np.inf
            elif s == ">=":
                slack_lb[i], slack_ub[i] = -np.inf, 0.0
            else:
                slack_lb[i], slack_ub[i] = 0.0, 0.0
        self.M = np.hstack([p.A, np.eye(m)]) if m else np.zeros((0, n))
        self.cost = np.concatenate([sign * p.c, np.zeros(m)])
        self.lb = np.concatenate([p.lb, slack_lb])
        self.ub = np.concatenate([p.ub, slack_ub])
        self.n_art = 0
        self.basis = None  # indices of basic columns, one per row
        self.state = None
        self.x = None
        self.Binv = None
        self.iterations = 0
        self._feasible = False

    def _initial_basis(self):
        m, n = self.m, self.n
        ncol = self.M.shape[1]
        x = np.zeros(ncol)
        state = np.empty(ncol, dtype=np.int8)
        for j in range(ncol):
            if np.isfinite(self.lb[j]):
                x[j], state[j] = self.lb[j], _AT_LB
            elif np.isfinite(self.ub[j]):
                x[j], state[j] = self.ub[j], _AT_UB
            else:
                x[j], state[j] = 0.0, _FREE_ZERO
        # residual each slack must absorb if it were basic
        structural = self.M[:, :n] @ x[:n] if m else np.zeros(0)
        r = self.problem.b - structural
        basis = np.empty(m, dtype=int)
        art_cols = []
        art_rows = []
        # singleton structural columns: usable to crash a row without artificials
        nnz = np.count_nonzero(self.M[:, :n], axis=0) if m else np.zeros(n, dtype=int)
        single_row = np.argmax(self.M[:, :n] != 0, axis=0) if m else np.zeros(n, dtype=int)
        used = np.zeros(n, dtype=bool)
        for i in range(m):
            s = n + i
            if self.lb[s] - FEAS_TOL <= r[i] <= self.ub[s] + FEAS_TOL:
                basis[i] = s
                x[s] = r[i]
                state[s] = _BASIC
                continue
            # move the slack to the violated bound, let a singleton column absorb the rest
            x_s = self.ub[s] if r[i] > self.ub[s] else self.lb[s]
            crashed = False
            for j in np.flatnonzero((nnz == 1) & (single_row == i) & ~used):
                a = self.M[i, j]
                xj = x[j] + (r[i] - x_s) / a
                if self.lb[j] - FEAS_TOL <= xj <= self.ub[j] + FEAS_TOL:
                    x[j] = xj
                    x[s] = x_s
                    state[s] = _AT_UB if x_s == self.ub[s] and x_s != self.lb[s] else _AT_LB
                    basis[i] = j
                    state[j] = _BASIC
                    used[j] = True
                    crashed = True
                    break
            if not crashed:
                # slack stays nonbasic at its finite bound; an artificial absorbs the rest
                resid = r[i] - x[s]
                art_rows.append(i)
                art_cols.append(np.sign(resid) if resid != 0 else 1.0)
        self.n_art = len(art_rows)
        if self.n_art:
            D = np.zeros((m, self.n_art))
            for k, (i, sgn) in enumerate(zip(art_rows, art_cols)):
                D[i, k] = sgn
            self.M = np.hstack([self.M, D])
            self.cost = np.concatenate([self.cost, np.zeros(self.n_art)])
            self.lb = np.concatenate([self.lb, np.zeros(self.n_art)])
            self.ub = np.concatenate([self.ub, np.full(self.n_art, np.inf)])
            base = n + m
            x = np.concatenate([x, np.zeros(self.n_art)])
            state = np.concatenate([state, np.full(self.n_art, _AT_LB, dtype=np.int8)])
            for k, i in enumerate(art_rows):
                resid = r[i] - x[n + i]
                basis[i] = base + k
                x[base + k] = abs(resid)
                state[base + k] = _BASIC
        self.basis = basis
        self.state = state
        self.x = x
        self._refactor()

    def _refactor(self):
        if self.m == 0:
            self.Binv = np.zeros((0, 0))
            return
        B = self.M[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular basis after {self.iterations} iterations") from exc
        nonbasic = self.state != _BASIC
        rhs = self.problem.b - self.M[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs

    # --------------------------------------------------------------- pivoting
    def _run(self, cost: np.ndarray, deadline: Optional[float]) -> str:
        """Optimize ``cost`` from the current feasible basis."""
        since_refactor = 0
        degenerate_run = 0
        bland = False
        while True:
            if self.iterations >= self.max_iter:
                return LIMIT
            if deadline is not None and time.monotonic() > deadline:
                return LIMIT
            y = cost[self.basis] @ self.Binv if self.m else np.zeros(0)
            d = cost - y @ self.M if self.m else cost.copy()
            st = self.state
            scale = 1.0 + np.abs(cost)
            can_up = ((st == _AT_LB) | (st == _FREE_ZERO)) & (d < -_OPT_TOL * scale)
            can_down = ((st == _AT_UB) | (st == _FREE_ZERO)) & (d > _OPT_TOL * scale)
            # fixed columns can never move
            fixed = self.lb == self.ub
            can_up &= ~fixed
            can_down &= ~fixed
            eligible = can_up | can_down
            if not eligible.any():
                return OPTIMAL
            if bland:
                j = int(np.flatnonzero(eligible)[0])
            else:
                score = np.where(eligible, np.abs(d), -1.0)
                j = int(np.argmax(score))
            direction = 1.0 if can_up[j] else -1.0
            alpha = self.Binv @ self.M[:, j] if self.m else np.zeros(0)
            step, leave, leave_to_ub = self._ratio_test(j, alpha, direction, bland)
            if step is None:
                return UNBOUNDED
            self.iterations += 1
            if step <= FEAS_TOL:
                degenerate_run += 1
                if degenerate_run >= _DEGENERATE_SWITCH:
                    bland = True
            else:
                degenerate_run = 0
                bland = False
            # move
            self.x[j] += direction * step
            if self.m:
                self.x[self.basis] -= direction * step * alpha
            if leave is None:
                # bound flip of the entering variable
                self.state[j] = _AT_UB if direction > 0 else _AT_LB
                self.x[j] = self.ub[j] if direction > 0 else self.lb[j]
                continue
            out = self.basis[leave]
            self.state[out] = _AT_UB if leave_to_ub else _AT_LB
            self.x[out] = self.ub[out] if leave_to_ub else self.lb[out]
            self.basis[leave] = j
            self.state[j] = _BASIC
            piv = alpha[leave]
            row = self.Binv[leave] / piv
            self.Binv -= np.outer(alpha, row)
            self.Binv[leave] = row
            since_refactor += 1
            if since_refactor >= _REFACTOR_EVERY:
                self._refactor()
                since_refactor = 0

    def _ratio_test(self, j, alpha, direction, bland):
        best = np.inf
        if np.isfinite(self.ub[j]) and np.isfinite(self.lb[j]):
            best = self.ub[j] - self.lb[j]
        leave = None
        leave_to_ub = False
        if self.m:
            rate = direction * alpha  # basic values move by -rate * step
            xb = self.x[self.basis]
            lbb = self.lb[self.basis]
            ubb = self.ub[self.basis]
            dec = rate > _PIVOT_TOL
            inc = rate < -_PIVOT_TOL
            with np.errstate(divide="ignore", invalid="ignore"):
                t_dec = np.where(dec, (xb - lbb) / np.where(dec, rate, 1.0), np.inf)
                t_inc = np.where(inc, (ubb - xb) / np.where(inc, -rate, 1.0), np.inf)
            t_dec = np.maximum(t_dec, 0.0)
            t_inc = np.maximum(t_inc, 0.0)
            t = np.minimum(t_dec, t_inc)
            tmin = float(np.min(t)) if t.size else np.inf
            if tmin < best:
                # among near-ties prefer the largest pivot (or lowest index under Bland)
                ties = np.flatnonzero(t <= tmin + FEAS_TOL)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                best = float(t[r])
                leave = r
                leave_to_ub = bool(t_inc[r] <= t_dec[r])
        if not np.isfinite(best):
            return None, None, False
        return best, leave, leave_to_ub

    # ------------------------------------------------------------------ public
    def solve(self) -> LpSolution:
        deadline = None if self.time_limit is None else time.monotonic() + self.time_limit
        if self.basis is None:
            self._initial_basis()
            self._feasible = self.n_art == 0
        if not self._feasible:
            phase1 = np.zeros(self.M.shape[1])
            phase1[self.n + self.m:] = 1.0
            status = self._run(phase1, deadline)
            if status == LIMIT:
                return self._result(LIMIT)
            infeas = float(np.sum(self.x[self.n + self.m:]))
            scale = 1.0 + float(np.max(np.abs(self.problem.b), initial=0.0))
            if infeas > FEAS_TOL * scale:
                return self._result(INFEASIBLE)
            self._retire_artificials()
            self._feasible = True
        status = self._run(self.cost, deadline)
        return self._result(status)

    def _retire_artificials(self):
        first = self.n + self.m
        self.ub[first:] = 0.0
        self.x[first:] = 0.0
        for r in range(self.m):
            col = self.basis[r]
            if col < first:
                continue
            row = self.Binv[r] @ self.M[:, :first]
            candidates = np.flatnonzero((np.abs(row) > 1e-7) & (self.state[:first] != _BASIC))
            if candidates.size == 0:
                continue  # redundant row; artificial stays basic at zero
            j = int(candidates[np.argmax(np.abs(row[candidates]))])
            alpha = self.Binv @ self.M[:, j]
            self.state[col] = _AT_LB
            self.basis[r] = j
            self.state[j] = _BASIC
            piv = alpha[r]
            newrow = self.Binv[r] / piv
            self.Binv -= np.outer(alpha, newrow)
            self.Binv[r] = newrow
        self._refactor()

    def add_columns(self, cols: np.ndarray, c: np.ndarray, lb=None, ub=None):
        """Append structural columns; the current basis stays primal feasible
        when each new column starts at a finite bound (default ``[0, inf)``)."""
        cols = np.asarray(cols, dtype=float).reshape(self.m, -1)
        k = cols.shape[1]
        c = np.asarray(c, dtype=float).ravel()
        lb = np.zeros(k) if lb is None else np.asarray(lb, dtype=float)
        ub = np.full(k, np.inf) if ub is None else np.asarray(ub, dtype=float)
        p = self.problem
        sign = -1.0 if p.maximize else 1.0
        self.problem = LpProblem(
            c=np.concatenate([p.c, c]),
            A=np.hstack([p.A, cols]),
            senses=p.senses,
            b=p.b,
            lb=np.concatenate([p.lb, lb]),
            ub=np.concatenate([p.ub, ub]),
            maximize=p.maximize,
        )
        n_old = self.n
        self.n += k
        if self.basis is None:
            self._build()
            return
        # insert the new columns ahead of the slack block
        def splice(arr, new):
            return np.concatenate([arr[:n_old], new, arr[n_old:]])

        self.M = np.hstack([self.M[:, :n_old], cols, self.M[:, n_old:]])
        self.cost = splice(self.cost, sign * c)
        self.lb = splice(self.lb, lb)
        self.ub = splice(self.ub, ub)
        start = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
        st = np.where(np.isfinite(lb), _AT_LB, np.where(np.isfinite(ub), _AT_UB, _FREE_ZERO)).astype(np.int8)
        self.x = splice(self.x, start)
        self.state = splice(self.state, st)
        self.basis = np.where(self.basis >= n_old, self.basis + k, self.basis)
        self._refactor()

    def _result(self, status: str) -> LpSolution:
        p = self.problem
        n, m = self.n, self.m
        x = self.x[:n].copy()
        sol = LpSolution(status=status, iterations=self.iterations, basis=self.basis.copy())
        if status in (INFEASIBLE,):
            return sol
        sol.x = x
        sol.objective = float(p.c @ x)
        if status == OPTIMAL:
            y = self.cost[self.basis] @ self.Binv if m else np.zeros(0)
            d = self.cost[:n] - (y @ self.M[:, :n] if m else 0.0)
            sign = -1.0 if p.maximize else 1.0
            sol.duals = sign * y
            sol.reduced_costs = sign * d
        return sol


def solve_lp(problem: LpProblem, time_limit: Optional[float] = None) -> LpSolution:
    """Solve ``problem`` with the internal simplex method."""
    return SimplexSolver(problem, time_limit=time_limit).solve()
