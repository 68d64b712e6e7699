"""Branch and bound over the internal simplex (or any LP callback)."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .problem import (
    INFEASIBLE,
    INT_TOL,
    LIMIT,
    OPTIMAL,
    UNBOUNDED,
    LpProblem,
    LpSolution,
    MipProblem,
)
from .simplex import solve_lp

# after an incumbent exists, jump to the best-bound node this often
_RESTART_EVERY = 25


@dataclass
class _Node:
    lb: np.ndarray
    ub: np.ndarray
    bound: float
    depth: int


def _with_bounds(p: LpProblem, lb, ub) -> LpProblem:
    return LpProblem(c=p.c, A=p.A, senses=p.senses, b=p.b, lb=lb, ub=ub, maximize=p.maximize)


def branch_and_bound(
    mip: MipProblem,
    lp_solve: Callable[[LpProblem], LpSolution] = solve_lp,
) -> LpSolution:
    """Most-fractional branching, depth-first with periodic best-bound restarts.

    Objectives are compared in minimization sense internally; the returned
    ``objective`` and ``bound`` are in the problem's own sense.
    """
    p = mip.lp
    sign = -1.0 if p.maximize else 1.0
    ints = np.array(mip.integer, dtype=int)
    start = time.monotonic()
    deadline = None if mip.time_limit is None else start + mip.time_limit

    best_x: Optional[np.ndarray] = None
    best_val = math.inf
    history: List[float] = []
    if mip.incumbent is not None:
        x0 = np.asarray(mip.incumbent, dtype=float)
        if p.max_violation(x0) <= 1e-6 and _integral(x0, ints):
            best_x, best_val = x0.copy(), sign * p.objective(x0)

    lb0 = p.lb.copy()
    ub0 = p.ub.copy()
    if ints.size:
        lb0[ints] = np.ceil(lb0[ints] - INT_TOL)
        ub0[ints] = np.floor(ub0[ints] + INT_TOL)
    open_nodes: List[_Node] = [_Node(lb0, ub0, -math.inf, 0)]
    nodes = 0
    since_restart = 0
    hit_limit = False
    root_unbounded = False

    while open_nodes:
        if deadline is not None and time.monotonic() > deadline:
            hit_limit = True
            break
        if mip.node_limit is not None and nodes >= mip.node_limit:
            hit_limit = True
            break
        if best_x is not None and since_restart >= _RESTART_EVERY:
            k = min(range(len(open_nodes)), key=lambda i: open_nodes[i].bound)
            node = open_nodes.pop(k)
            since_restart = 0
        else:
            node = open_nodes.pop()
            since_restart += 1
        if node.bound >= best_val - _prune_tol(best_val):
            continue
        nodes += 1
        if np.any(node.lb > node.ub):
            continue
        sol = lp_solve(_with_bounds(p, node.lb, node.ub))
        if sol.status == INFEASIBLE:
            continue
        if sol.status == UNBOUNDED:
            if nodes == 1:
                root_unbounded = True
                break
            continue
        if sol.status != OPTIMAL:
            hit_limit = True
            break
        val = sign * sol.objective
        if val >= best_val - _prune_tol(best_val):
            continue
        x = sol.x
        frac = np.abs(x[ints] - np.round(x[ints])) if ints.size else np.zeros(0)
        if frac.size == 0 or frac.max() <= INT_TOL:
            xr = x.copy()
            if ints.size:
                xr[ints] = np.round(xr[ints])
            best_x, best_val = xr, val
            history.append(sign * val)
            continue
        k = int(np.argmax(frac))
        j = int(ints[k])
        down_ub = node.ub.copy()
        down_ub[j] = math.floor(x[j])
        up_lb = node.lb.copy()
        up_lb[j] = math.ceil(x[j])
        down = _Node(node.lb, down_ub, val, node.depth + 1)
        up = _Node(up_lb, node.ub, val, node.depth + 1)
        # explore the rounding direction first (pushed last)
        if x[j] - math.floor(x[j]) >= 0.5:
            open_nodes.extend([down, up])
        else:
            open_nodes.extend([up, down])

    if root_unbounded:
        return LpSolution(status=UNBOUNDED, nodes=nodes)
    open_bound = min((n.bound for n in open_nodes), default=math.inf)
    if hit_limit:
        bound = min(open_bound, best_val)
    else:
        bound = best_val
    if best_x is None:
        status = LIMIT if hit_limit else INFEASIBLE
        return LpSolution(status=status, nodes=nodes,
                          bound=None if not math.isfinite(bound) else sign * bound,
                          message="no integer-feasible solution found")
    gap = 0.0
    if math.isfinite(bound):
        gap = max(0.0, (best_val - bound) / max(1.0, abs(best_val)))
    else:
        gap = math.inf
    status = OPTIMAL if (not hit_limit or gap <= 1e-6) else LIMIT
    return LpSolution(
        status=status,
        x=best_x,
        objective=p.objective(best_x),
        bound=sign * bound if math.isfinite(bound) else None,
        gap=gap,
        nodes=nodes,
        history=history,
    )


def _prune_tol(best: float) -> float:
    if not math.isfinite(best):
        return 0.0
    return 1e-9 * max(1.0, abs(best))


def _integral(x: np.ndarray, ints: np.ndarray) -> bool:
    if ints.size == 0:
        return True
    return bool(np.all(np.abs(x[ints] - np.round(x[ints])) <= INT_TOL))
