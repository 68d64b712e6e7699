"""SciPy HiGHS backend with the same problem/solution contract as the internal solver."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .problem import INFEASIBLE, LIMIT, OPTIMAL, UNBOUNDED, LpProblem, LpSolution, MipProblem


def _split_rows(p: LpProblem):
    le = np.array([s == "<=" for s in p.senses], dtype=bool)
    ge = np.array([s == ">=" for s in p.senses], dtype=bool)
    eq = np.array([s == "=" for s in p.senses], dtype=bool)
    return le, ge, eq


def highs_lp(p: LpProblem, time_limit: Optional[float] = None) -> LpSolution:
    """Solve with ``linprog(method='highs')``; duals are d(obj)/d(b)."""
    sign = -1.0 if p.maximize else 1.0
    le, ge, eq = _split_rows(p)
    n = p.n_vars
    A_ub = np.vstack([p.A[le], -p.A[ge]]) if (le.any() or ge.any()) else None
    b_ub = np.concatenate([p.b[le], -p.b[ge]]) if A_ub is not None else None
    A_eq = p.A[eq] if eq.any() else None
    b_eq = p.b[eq] if eq.any() else None
    bounds = [(None if not math.isfinite(lo) else lo, None if not math.isfinite(hi) else hi)
              for lo, hi in zip(p.lb, p.ub)]
    opts = {"presolve": True}
    if time_limit is not None:
        opts["time_limit"] = float(time_limit)
    res = linprog(sign * p.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs", options=opts)
    if res.status == 2:
        # presolve can report "infeasible" for infeasible-or-unbounded models
        opts["presolve"] = False
        res = linprog(sign * p.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=bounds, method="highs", options=opts)
    if res.status == 2:
        return LpSolution(status=INFEASIBLE, message=res.message)
    if res.status == 3:
        return LpSolution(status=UNBOUNDED, message=res.message)
    if res.status != 0:
        return LpSolution(status=LIMIT, message=res.message)
    duals = np.zeros(p.n_rows)
    if A_ub is not None:
        m_ub = res.ineqlin.marginals
        k = int(le.sum())
        duals[le] = sign * m_ub[:k]
        duals[ge] = -sign * m_ub[k:]
    if A_eq is not None:
        duals[eq] = sign * res.eqlin.marginals
    rc = sign * (res.lower.marginals + res.upper.marginals) if n else np.zeros(0)
    x = np.asarray(res.x, dtype=float)
    return LpSolution(status=OPTIMAL, x=x, objective=p.objective(x), duals=duals,
                      reduced_costs=rc, iterations=int(getattr(res, "nit", 0)))


def highs_mip(mip: MipProblem) -> LpSolution:
    """Solve with ``scipy.optimize.milp``; the time limit maps to HiGHS' own."""
    p = mip.lp
    sign = -1.0 if p.maximize else 1.0
    lo = np.full(p.n_rows, -np.inf)
    hi = np.full(p.n_rows, np.inf)
    for i, s in enumerate(p.senses):
        if s in ("<=", "="):
            hi[i] = p.b[i]
        if s in (">=", "="):
            lo[i] = p.b[i]
    integrality = np.zeros(p.n_vars)
    integrality[list(mip.integer)] = 1
    opts = {"presolve": True, "mip_rel_gap": 1e-9}
    if mip.time_limit is not None:
        opts["time_limit"] = float(mip.time_limit)
    if mip.node_limit is not None:
        opts["node_limit"] = int(mip.node_limit)
    cons = [LinearConstraint(p.A, lo, hi)] if p.n_rows else []
    res = milp(sign * p.c, constraints=cons, integrality=integrality,
               bounds=Bounds(p.lb, p.ub), options=opts)
    bound = getattr(res, "mip_dual_bound", None)
    bound = None if bound is None or not np.isfinite(bound) else sign * float(bound)
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.x is None:
        if res.status == 2:
            return LpSolution(status=INFEASIBLE, nodes=nodes, message=res.message)
        if res.status == 3:
            return LpSolution(status=UNBOUNDED, nodes=nodes, message=res.message)
        return LpSolution(status=LIMIT, bound=bound, nodes=nodes,
                          message="no integer-feasible solution found")
    x = np.asarray(res.x, dtype=float)
    ints = list(mip.integer)
    x[ints] = np.round(x[ints])
    obj = p.objective(x)
    gap = getattr(res, "mip_gap", None)
    gap = 0.0 if gap is None or not np.isfinite(gap) else max(0.0, float(gap))
    status = OPTIMAL if res.status == 0 else LIMIT
    return LpSolution(status=status, x=x, objective=obj, bound=bound, gap=gap,
                      nodes=nodes, message=res.message)
