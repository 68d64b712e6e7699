"""Problem and solution containers shared by the LP and MIP solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

# Centralized tolerances.
FEAS_TOL = 1e-7
INT_TOL = 1e-6
DUAL_TOL = 1e-6

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit"

_SENSE_ALIASES = {
    "<=": "<=", "<": "<=", "L": "<=", "le": "<=",
    ">=": ">=", ">": ">=", "G": ">=", "ge": ">=",
    "=": "=", "==": "=", "E": "=", "eq": "=",
}


class SolverError(RuntimeError):
    """Raised when the simplex method cannot continue for numerical reasons."""


@dataclass
class LpProblem:
    """Linear program ``min/max c.x  s.t.  A x (<=|=|>=) b,  lb <= x <= ub``.

    ``A`` is stored densely and row-wise.  Bounds default to ``[0, inf)``.
    """

    c: np.ndarray
    A: np.ndarray
    senses: Sequence[str]
    b: np.ndarray
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    maximize: bool = False
    var_names: Optional[Sequence[str]] = None
    row_names: Optional[Sequence[str]] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        if A.ndim != 2 or A.shape[1] != n:
            raise ValueError(f"constraint matrix has shape {A.shape}, expected (m, {n})")
        self.A = A
        m = A.shape[0]
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.b.size != m:
            raise ValueError(f"rhs has length {self.b.size}, expected {m}")
        if len(self.senses) != m:
            raise ValueError(f"got {len(self.senses)} senses for {m} rows")
        try:
            self.senses = tuple(_SENSE_ALIASES[s] for s in self.senses)
        except KeyError as exc:
            raise ValueError(f"unknown constraint sense {exc.args[0]!r}") from None
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bound vectors must match the number of variables")
        for name, arr in (("objective", self.c), ("matrix", self.A), ("rhs", self.b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite {name} coefficient")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise ValueError("NaN bound")
        if np.any(self.lb == np.inf) or np.any(self.ub == -np.inf):
            raise ValueError("lower bound +inf or upper bound -inf")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint or bound violation of ``x``."""
        x = np.asarray(x, dtype=float)
        viol = 0.0
        if self.n_rows:
            act = self.A @ x
            for sense in ("<=", ">=", "="):
                mask = np.array([s == sense for s in self.senses])
                if not mask.any():
                    continue
                r = act[mask] - self.b[mask]
                if sense == "<=":
                    viol = max(viol, float(np.max(r, initial=0.0)))
                elif sense == ">=":
                    viol = max(viol, float(np.max(-r, initial=0.0)))
                else:
                    viol = max(viol, float(np.max(np.abs(r), initial=0.0)))
        viol = max(viol, float(np.max(self.lb - x, initial=0.0)))
        viol = max(viol, float(np.max(x - self.ub, initial=0.0)))
        return viol


@dataclass
class MipProblem:
    """An :class:`LpProblem` with integrality restrictions on some variables."""

    lp: LpProblem
    integer: Sequence[int]
    time_limit: Optional[float] = None
    node_limit: Optional[int] = None
    incumbent: Optional[np.ndarray] = None

    def __post_init__(self):
        self.integer = tuple(sorted(set(int(j) for j in self.integer)))
        n = self.lp.n_vars
        if any(j < 0 or j >= n for j in self.integer):
            raise ValueError("integer index out of range")


@dataclass
class LpSolution:
    """Result of an LP or MIP solve.

    ``duals[i]`` is the sensitivity of the optimal objective to ``b[i]``, so a
    binding ``<=`` row of a maximization has a nonnegative dual.  MIP results
    carry no duals; they report ``bound`` and ``gap`` instead.
    """

    status: str
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    iterations: int = 0
    bound: Optional[float] = None
    gap: Optional[float] = None
    nodes: int = 0
    message: str = ""
    history: list = field(default_factory=list, repr=False)
    basis: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def dual_objective(self, p: LpProblem) -> float:
        """``b.y`` plus the bound terms of nonbasic columns."""
        if self.duals is None or self.reduced_costs is None or self.x is None:
            raise ValueError("no dual information")
        total = float(p.b @ self.duals)
        for j, d in enumerate(self.reduced_costs):
            if abs(d) > 0:
                total += d * self.x[j]
        return total
