"""LP/MIP substrate: an internal dense simplex with branch and bound, plus a HiGHS backend."""

from __future__ import annotations

from typing import Optional

from .branch_bound import branch_and_bound
from .highs import highs_lp, highs_mip
from .lpformat import to_lp_string, write_lp
from .problem import (
    DUAL_TOL,
    FEAS_TOL,
    INFEASIBLE,
    INT_TOL,
    LIMIT,
    OPTIMAL,
    UNBOUNDED,
    LpProblem,
    LpSolution,
    MipProblem,
    SolverError,
)
from .simplex import SimplexSolver
from .simplex import solve_lp as _simplex_lp

BACKENDS = ("internal", "highs")


def solve_lp(p: LpProblem, backend: str = "internal", time_limit: Optional[float] = None) -> LpSolution:
    if backend == "internal":
        return _simplex_lp(p, time_limit=time_limit)
    if backend == "highs":
        return highs_lp(p, time_limit=time_limit)
    raise ValueError(f"unknown backend {backend!r}")


def solve_mip(p: MipProblem, backend: str = "internal") -> LpSolution:
    if backend == "internal":
        return branch_and_bound(p)
    if backend == "highs":
        return highs_mip(p)
    raise ValueError(f"unknown backend {backend!r}")


__all__ = [
    "BACKENDS", "DUAL_TOL", "FEAS_TOL", "INFEASIBLE", "INT_TOL", "LIMIT", "OPTIMAL", "UNBOUNDED",
    "LpProblem", "LpSolution", "MipProblem", "SimplexSolver", "SolverError",
    "branch_and_bound", "highs_lp", "highs_mip", "solve_lp", "solve_mip",
    "to_lp_string", "write_lp",
]
