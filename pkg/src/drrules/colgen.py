"""Column generation for the weighted rule-set problem.

Restricted master LP over a pool of conjunctions ``k`` (relaxed ``w_k in [0,1]``)::

    min  sum_{i: y=1} xi_i + sum_k (sum_{i: y=0, t_k(x_i)=1} P_i) w_k
    s.t. xi_i + P_i sum_{k covers i} w_k >= P_i     for every label-1 point
         sum_k c_k w_k <= C'

New conjunctions are priced with the duals ``mu`` (label-1 rows) and ``lam`` (minus the
complexity-row dual).  A conjunction ``S`` of positive literals has reduced cost

    lam (1 + |S|) + sum_{i covered} omega_i,  omega_i = P_i (y_i=0),  -P_i mu_i (y_i=1).
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dataset import BinaryDataset
from .rules import Conjunction, RuleSet
from .solver import OPTIMAL, LpProblem, MipProblem, solve_lp, solve_mip

log = logging.getLogger(__name__)

RC_TOL = 1e-9


class ColgenError(RuntimeError):
    pass


@dataclass
class ColgenConfig:
    cprime: int = 5
    literal_cap: Optional[int] = None  # defaults to cprime - 1
    pricing_time: float = 30.0
    colgen_time: float = 300.0
    max_iters: int = 5
    max_new_columns: int = 10
    beam_width: int = 10
    mip_time: Optional[float] = None  # defaults to the unused colgen budget, at least 10 s
    exact: bool = False  # after convergence, close the integrality gap by enumeration
    closure_cap: int = 20000
    enum_cap: int = 200000  # solve the master IP by enumeration below this many subsets
    use_negations: bool = False
    backend: str = "highs"
    trace: bool = False

    def __post_init__(self):
        if self.cprime < 2:
            raise ValueError("cprime must be at least 2")
        if self.cap_literals < 1:
            raise ValueError("literal cap must be positive")
        if min(self.pricing_time, self.colgen_time) <= 0 or self.max_iters < 0:
            raise ValueError("time limits must be positive and iteration cap nonnegative")

    @property
    def cap_literals(self) -> int:
        cap = self.cprime - 1 if self.literal_cap is None else self.literal_cap
        return min(cap, self.cprime - 1)


class LiteralSpace:
    """The 0/1 matrix whose columns are candidate literals.

    Without negations literal ``j`` is ``x_j = 1``; with them literals ``d..2d-1`` are
    ``x_{j-d} = 0``.
    """

    def __init__(self, X: np.ndarray, use_negations: bool = False):
        X = np.asarray(X, dtype=np.uint8)
        self.d = X.shape[1]
        self.use_negations = use_negations
        self.L = np.hstack([X, 1 - X]) if use_negations else X
        self.Lf = self.L.astype(np.float64)

    @property
    def n_literals(self) -> int:
        return self.L.shape[1]

    def feature(self, lit: int) -> int:
        return lit % self.d

    def to_conjunction(self, lits: Sequence[int]) -> Conjunction:
        return Conjunction((l % self.d, 0 if l >= self.d else 1) for l in lits)

    def from_conjunction(self, t: Conjunction) -> Tuple[int, ...]:
        return tuple(sorted(j if v == 1 else j + self.d for j, v in t.literals))

    def valid(self, lits: Sequence[int]) -> bool:
        feats = [l % self.d for l in lits]
        return len(set(feats)) == len(feats)

    def coverage(self, lits: Sequence[int]) -> np.ndarray:
        cov = np.ones(self.L.shape[0], dtype=bool)
        for l in lits:
            cov &= self.L[:, l] == 1
        return cov


class ColumnPool:
    """Generated conjunctions with cached coverage over the training rows."""

    def __init__(self, space: LiteralSpace):
        self.space = space
        self.keys: List[Tuple[int, ...]] = []
        self.index: Dict[Tuple[int, ...], int] = {}
        self._cov: List[np.ndarray] = []

    def __len__(self):
        return len(self.keys)

    def __contains__(self, key):
        return tuple(key) in self.index

    def add(self, lits: Sequence[int]) -> bool:
        key = tuple(sorted(lits))
        if key in self.index or not key or not self.space.valid(key):
            return False
        self.index[key] = len(self.keys)
        self.keys.append(key)
        self._cov.append(self.space.coverage(key))
        return True

    @property
    def coverage(self) -> np.ndarray:
        """N x K boolean incidence matrix."""
        if not self._cov:
            return np.zeros((self.space.L.shape[0], 0), dtype=bool)
        return np.column_stack(self._cov)

    @property
    def complexities(self) -> np.ndarray:
        return np.array([len(k) + 1 for k in self.keys], dtype=float)

    def conjunction(self, k: int) -> Conjunction:
        return self.space.to_conjunction(self.keys[k])


# ------------------------------------------------------------------- master
@dataclass
class Master:
    lp: LpProblem
    pos: np.ndarray  # indices of label-1 points with a row
    n_xi: int

    def rule_part(self, x: np.ndarray) -> np.ndarray:
        return x[self.n_xi:]


def build_master(pool: ColumnPool, y: np.ndarray, P: np.ndarray, cprime: float,
                 columns: Optional[Sequence[int]] = None) -> Master:
    """LP relaxation of the restricted master over ``pool`` (or the given pool columns)."""
    y = np.asarray(y)
    P = np.asarray(P, dtype=float)
    if not np.any(y == 1):
        raise ColgenError("no label-1 points: degenerate task")
    if len(pool) == 0:
        raise ColgenError("column pool is empty")
    cov = pool.coverage
    costs = pool.complexities
    if columns is not None:
        columns = np.asarray(columns, dtype=int)
        cov, costs = cov[:, columns], costs[columns]
    pos = np.flatnonzero((y == 1) & (P > 0))
    neg = y == 0
    n_xi = pos.size
    K = cov.shape[1]
    fp = (P[neg][:, None] * cov[neg]).sum(axis=0) if neg.any() else np.zeros(K)
    c = np.concatenate([np.ones(n_xi), fp])
    A = np.zeros((n_xi + 1, n_xi + K))
    A[np.arange(n_xi), np.arange(n_xi)] = 1.0
    A[:n_xi, n_xi:] = P[pos][:, None] * cov[pos]
    A[n_xi, n_xi:] = costs
    b = np.concatenate([P[pos], [float(cprime)]])
    lb = np.zeros(n_xi + K)
    ub = np.concatenate([np.full(n_xi, np.inf), np.ones(K)])
    senses = [">="] * n_xi + ["<="]
    return Master(LpProblem(c, A, senses, b, lb=lb, ub=ub), pos, n_xi)


def master_duals(master: Master, sol, N: int) -> Tuple[np.ndarray, float]:
    """``mu`` (length N, zero off the label-1 rows) and ``lam`` >= 0."""
    if sol.duals is None:
        raise ColgenError("duals missing")
    mu = np.zeros(N)
    mu[master.pos] = np.clip(sol.duals[: master.n_xi], 0.0, None)
    lam = max(0.0, -float(sol.duals[master.n_xi]))
    return mu, lam


def point_weights(y: np.ndarray, P: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """``omega_i``: the per-point contribution of covering ``i`` to the reduced cost."""
    y = np.asarray(y)
    return np.where(y == 0, P, -P * mu)


def reduced_cost(rule, mu, lam: float, P, y, X: Optional[np.ndarray] = None) -> float:
    """Reduced cost of ``rule`` (a Conjunction, or a coverage vector with ``X`` None)."""
    if mu is None or lam is None:
        raise ColgenError("duals missing")
    if isinstance(rule, Conjunction):
        if X is None:
            raise ColgenError("X needed to evaluate a conjunction")
        delta = rule.evaluate(X).astype(float)
        ck = rule.complexity
    else:
        delta, ck = np.asarray(rule[0], dtype=float), rule[1]
    y = np.asarray(y)
    P = np.asarray(P, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return float(np.sum(P[y == 0] * delta[y == 0]) - np.sum(P[y == 1] * mu[y == 1] * delta[y == 1])
                 + lam * ck)


# ------------------------------------------------------------------ pricing
@dataclass
class PricingResult:
    columns: List[Tuple[Tuple[int, ...], float]]  # (literals, reduced cost), most negative first
    exact: bool  # True when the search tree was exhausted
    best_value: float
    nodes: int = 0

    @property
    def found(self) -> bool:
        return bool(self.columns)


def _beam(space: LiteralSpace, omega: np.ndarray, lam: float, cap: int, width: int,
          pool: ColumnPool, threshold: float) -> Dict[Tuple[int, ...], float]:
    """Greedy literal-append beam search; returns every visited rule below ``threshold``."""
    L = space.Lf
    found: Dict[Tuple[int, ...], float] = {}
    vals = lam * 2.0 + omega @ L
    order = np.argsort(vals, kind="stable")
    beam = [((int(j),), float(vals[j])) for j in order[:width]]
    for j in order:
        if vals[j] >= threshold:
            break
        key = (int(j),)
        if key not in pool:
            found[key] = float(vals[j])
    for size in range(2, cap + 1):
        cand: Dict[Tuple[int, ...], float] = {}
        for lits, _ in beam:
            cov = space.coverage(lits)
            if not cov.any():
                continue
            child = lam * (size + 1.0) + omega[cov] @ L[cov]
            for j in np.argsort(child, kind="stable")[: 4 * width]:
                j = int(j)
                key = tuple(sorted(lits + (j,)))
                if j in lits or key in cand or not space.valid(key):
                    continue
                cand[key] = float(child[j])
        if not cand:
            break
        ranked = sorted(cand.items(), key=lambda kv: (kv[1], kv[0]))
        beam = ranked[:width]
        for key, v in ranked:
            if v >= threshold:
                break
            if key not in pool:
                found[key] = v
    return found


def _tree(space: LiteralSpace, omega: np.ndarray, lam: float, cap: int, pool: ColumnPool,
          incumbent: float, deadline: Optional[float], collect_below: Optional[float] = None,
          collect_cap: int = 10, node_cap: Optional[int] = None, chunk: int = 2048,
          first_improving: bool = False):
    """Branch and bound over literal sets in increasing index order, one depth at a time.

    Bound for every proper extension of ``S``: ``lam (|S| + 2) + sum_{cov(S)} min(omega, 0)``.
    A literal that leaves the coverage unchanged is never appended (the shorter rule
    dominates).  With ``collect_below`` set, every rule valued below it is collected
    (enumeration mode); otherwise the search minimizes and collects the negative columns
    met on the way.  ``first_improving`` stops after the first chunk that yields a negative
    column.  Returns (found dict, exhausted flag, nodes).
    """
    Lb = space.L.astype(bool)
    Lf = space.Lf
    N, n_lit = Lb.shape
    neg_omega = np.minimum(omega, 0.0)
    feat = np.arange(n_lit) % space.d
    found: Dict[Tuple[int, ...], float] = {}
    best = incumbent
    nodes = 0

    def threshold():
        return collect_below if collect_below is not None else min(best, -RC_TOL)

    # a level: literal tuples plus their coverage masks (rows)
    level_keys: List[Tuple[int, ...]] = [()]
    level_cov = np.ones((1, N), dtype=bool)
    for size in range(1, cap + 1):
        next_keys: List[Tuple[int, ...]] = []
        next_cov: List[np.ndarray] = []
        for c0 in range(0, len(level_keys), chunk):
            if deadline is not None and time.monotonic() > deadline:
                return found, False, nodes
            if node_cap is not None and nodes >= node_cap:
                return found, False, nodes
            keys = level_keys[c0:c0 + chunk]
            cov = level_cov[c0:c0 + chunk]
            nodes += len(keys)
            covf = cov.astype(np.float64)
            val = lam * (size + 1.0) + (covf * omega) @ Lf
            bound = lam * (size + 2.0) + (covf * neg_omega) @ Lf if size < cap else None
            ncov = cov.sum(axis=1)
            inter = covf @ Lf  # covered count after appending each literal
            lastlit = np.array([k[-1] if k else -1 for k in keys])
            ok = np.arange(n_lit)[None, :] > lastlit[:, None]
            if size > 1:
                ok &= inter < ncov[:, None]  # coverage must change
                if space.use_negations:  # without negations the index order excludes reuse
                    for r, k in enumerate(keys):
                        ok[r] &= ~np.isin(feat, feat[list(k)])
            thr = threshold()
            rr, jj = np.nonzero(ok & (val < thr))
            order = np.lexsort((jj, rr, val[rr, jj]))
            for t in order:
                r, j = int(rr[t]), int(jj[t])
                v = float(val[r, j])
                if v >= threshold():
                    break
                key = keys[r] + (j,)
                if key in pool:
                    continue
                found[key] = v
                if collect_below is None:
                    best = min(best, v)
                elif len(found) >= collect_cap:
                    return found, False, nodes
            if first_improving and found:
                return found, False, nodes
            if bound is None:
                continue
            thr = threshold()
            rr, jj = np.nonzero(ok & (bound < thr - 1e-15) & (inter > 0))
            for r, j in zip(rr.tolist(), jj.tolist()):
                next_keys.append(keys[r] + (j,))
            if rr.size:
                next_cov.append(cov[rr] & Lb[:, jj].T)
        if not next_keys:
            break
        level_keys = next_keys
        level_cov = np.vstack(next_cov)
    return found, True, nodes


def solve_pricing(space: LiteralSpace, y, P, mu, lam: float, config: ColgenConfig,
                  pool: Optional[ColumnPool] = None) -> PricingResult:
    """Find conjunctions with negative reduced cost.

    The beam heuristic runs first; only when it finds nothing does the exact tree search
    run (within ``pricing_time``), stopping at the first improving chunk.  ``exact`` certifies
    that no negative column exists.
    """
    y = np.asarray(y)
    omega = point_weights(y, np.asarray(P, dtype=float), np.asarray(mu, dtype=float))
    pool = pool if pool is not None else ColumnPool(space)
    cap = config.cap_literals
    found = _beam(space, omega, lam, cap, config.beam_width, pool, -RC_TOL)
    exact = False
    nodes = 0
    if not found:
        deadline = time.monotonic() + config.pricing_time
        tfound, exact, nodes = _tree(space, omega, lam, cap, pool, 0.0, deadline,
                                     first_improving=True)
        found.update(tfound)
    cols = sorted(found.items(), key=lambda kv: (kv[1], kv[0]))
    best = cols[0][1] if cols else 0.0
    return PricingResult(cols[: config.max_new_columns], exact and not cols, best, nodes)


# ----------------------------------------------------------------- driver
@dataclass
class ColgenResult:
    ruleset: RuleSet
    objective: float  # weighted Hamming objective of the returned integer solution
    lp_bound: float
    iterations: int
    converged: bool  # pricing certified no negative column
    exact: bool  # MIP over the pool is a certified optimum over all rule sets
    pool_size: int
    flags: List[str] = field(default_factory=list)
    trace: List[dict] = field(default_factory=list)


def seed_pool(pool: ColumnPool, y: np.ndarray, P: np.ndarray) -> None:
    """Single literals with weighted precision above 1/2, else the single best literal."""
    L = pool.space.Lf
    wpos = (P * (y == 1)) @ L
    wall = P @ L
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(wall > 0, wpos / wall, 0.0)
    good = np.flatnonzero(prec > 0.5)
    if good.size == 0:
        good = [int(np.lexsort((-wpos, -prec))[0])]
    for j in good:
        pool.add((int(j),))


def hamming_objective(cov: np.ndarray, y: np.ndarray, P: np.ndarray) -> float:
    """``sum_{y=1} P_i [no rule covers i] + sum_{y=0} P_i * #rules covering i``."""
    y = np.asarray(y)
    if cov.ndim == 1:
        cov = cov[:, None]
    n_cov = cov.sum(axis=1)
    return float(np.sum(P[y == 1] * (n_cov[y == 1] == 0)) + np.sum(P[y == 0] * n_cov[y == 0]))


def count_subsets(costs: np.ndarray, budget: int, cap: int) -> int:
    """Number of nonempty column subsets with total cost <= budget, saturating at ``cap + 1``."""
    budget = int(math.floor(budget + 1e-9))
    ways = np.zeros(budget + 1, dtype=np.int64)
    ways[0] = 1
    for c in np.asarray(costs, dtype=int):
        if c <= budget:
            ways[c:] = np.minimum(ways[c:] + ways[:budget + 1 - c], cap + 1)
    return int(min(ways.sum() - 1, cap + 1))


def enumerate_master(cov: np.ndarray, costs: np.ndarray, y, P, budget: float) -> Tuple[List[int], float]:
    """Exact master IP by depth-first enumeration of affordable column subsets.

    Negatives are charged once per covering rule, positives once if uncovered.  The last
    level of each branch is evaluated in one vectorized step.
    """
    y = np.asarray(y)
    pos = (y == 1).astype(float) * P
    fp = (((y == 0) * P) @ cov).astype(float)
    covf = cov.astype(float)
    costs = np.asarray(costs, dtype=float)
    base = float(pos.sum())
    best = [base, []]  # empty rule set

    def rec(start, covered, value, left, chosen):
        if start >= cov.shape[1]:
            return
        cand = np.arange(start, cov.shape[1])
        cand = cand[costs[cand] <= left + 1e-9]
        if cand.size == 0:
            return
        vals = value - (pos * ~covered) @ covf[:, cand] + fp[cand]
        k = int(np.argmin(vals))
        if vals[k] < best[0] - 1e-15:
            best[0], best[1] = float(vals[k]), chosen + [int(cand[k])]
        cheapest = costs[cand].min()
        for j, v in zip(cand, vals):
            if left - costs[j] >= cheapest - 1e-9:
                rec(j + 1, covered | cov[:, j], float(v), left - costs[j], chosen + [int(j)])

    rec(0, np.zeros(cov.shape[0], dtype=bool), base, float(budget), [])
    return best[1], best[0]


def _solve_master_mip(master: Master, time_limit: float, backend: str, incumbent=None):
    nxi = master.n_xi
    K = master.lp.n_vars - nxi
    mip = MipProblem(master.lp, integer=range(nxi, nxi + K), time_limit=time_limit,
                     incumbent=incumbent)
    return solve_mip(mip, backend=backend)


def generate_ruleset(ds: BinaryDataset, P, config: ColgenConfig,
                     pool: Optional[ColumnPool] = None) -> ColgenResult:
    """Column generation on the LP relaxation, then the restricted master as a MIP."""
    t0 = time.monotonic()
    deadline = t0 + config.colgen_time
    y = np.asarray(ds.y)
    P = np.asarray(P, dtype=float)
    N = ds.n
    flags: List[str] = []
    if not np.any((y == 1) & (P > 0)):
        flags.append("no weighted label-1 points: empty rule set")
        obj = hamming_objective(np.zeros((N, 0), dtype=bool), y, P)
        return ColgenResult(RuleSet(), obj, obj, 0, True, True, 0 if pool is None else len(pool), flags)
    if pool is None:
        pool = ColumnPool(LiteralSpace(ds.X, config.use_negations))
    if len(pool) == 0:
        seed_pool(pool, y, P)

    trace: List[dict] = []
    converged = False
    it = 0
    lp_obj = math.inf
    while True:
        master = build_master(pool, y, P, config.cprime)
        sol = solve_lp(master.lp, backend=config.backend)
        if sol.status != OPTIMAL:
            raise ColgenError(f"restricted master LP returned {sol.status}")
        lp_obj = sol.objective
        if it >= config.max_iters or time.monotonic() > deadline:
            break
        mu, lam = master_duals(master, sol, N)
        pr = solve_pricing(pool.space, y, P, mu, lam, config, pool)
        added = sum(pool.add(k) for k, _ in pr.columns)
        it += 1
        rec = {"iteration": it, "rmlp": lp_obj, "added": added, "pricing_best": pr.best_value,
               "pricing_exact": pr.exact, "elapsed": time.monotonic() - t0}
        trace.append(rec)
        if config.trace:
            log.info("colgen %s", json.dumps(rec, sort_keys=True))
        if added == 0:
            converged = pr.exact
            break

    remaining = max(10.0, deadline - time.monotonic())
    mip_time = config.mip_time if config.mip_time is not None else remaining
    chosen, mip_obj, status, lp_obj, master, lsol = restricted_mip(pool, y, P, config, mip_time)
    if status != OPTIMAL:
        flags.append("master MIP stopped at the time limit")
    exact = False
    if config.exact and converged and status == OPTIMAL:
        exact = _close_gap(pool, y, P, config, master, lsol, lp_obj, mip_obj)
        chosen, mip_obj, status, lp_obj, master, lsol = restricted_mip(pool, y, P, config, mip_time)
        exact = exact and status == OPTIMAL
    rs = RuleSet(pool.conjunction(k) for k in chosen)
    cov = pool.coverage[:, chosen]
    obj = hamming_objective(cov, y, P)
    if rs.complexity > config.cprime:
        raise ColgenError("selected rule set exceeds the complexity budget")
    return ColgenResult(rs, obj, lp_obj, it, converged, exact, len(pool), flags, trace)


def greedy_ruleset(cov: np.ndarray, costs: np.ndarray, y, P, budget: float) -> List[int]:
    """Add the pool column with the largest Hamming-objective decrease while it fits."""
    y = np.asarray(y)
    chosen: List[int] = []
    covered = np.zeros(cov.shape[0], dtype=bool)
    left = float(budget)
    pos, neg = (y == 1), (y == 0)
    while True:
        gain = (P * pos * ~covered) @ cov - (P * neg) @ cov
        gain[costs > left + 1e-9] = -np.inf
        gain[chosen] = -np.inf
        k = int(np.argmax(gain))
        if not gain[k] > 1e-15:
            return chosen
        chosen.append(k)
        covered |= cov[:, k]
        left -= costs[k]


def restricted_mip(pool: ColumnPool, y, P, config: ColgenConfig, time_limit: float):
    """Master MIP over the pool after reduced-cost fixing.

    With LP value ``z`` and a greedy incumbent of value ``U``, a column with reduced cost
    ``>= U - z`` cannot appear in a better integer solution, so it is left out.
    Returns (pool indices, objective, status, LP value, full master, LP solution).
    """
    y = np.asarray(y)
    master = build_master(pool, y, P, config.cprime)
    lsol = solve_lp(master.lp, backend=config.backend)
    if lsol.status != OPTIMAL:
        raise ColgenError(f"restricted master LP returned {lsol.status}")
    z = lsol.objective
    cov = pool.coverage
    costs = pool.complexities
    inc = greedy_ruleset(cov, costs, y, P, config.cprime)
    ub = hamming_objective(cov[:, inc], y, P)
    rc = master.rule_part(master.lp.c - master.lp.A.T @ lsol.duals)
    keep = np.flatnonzero(rc < ub - z + 1e-9)
    keep = np.union1d(keep, np.asarray(inc, dtype=int)).astype(int)
    if ub - z <= 1e-12 or keep.size == 0:
        return inc, ub, OPTIMAL, z, master, lsol
    if count_subsets(costs[keep], config.cprime, config.enum_cap) <= config.enum_cap:
        sub_chosen, obj = enumerate_master(cov[:, keep], costs[keep], y, P, config.cprime)
        if obj < ub:
            return [int(keep[k]) for k in sub_chosen], obj, OPTIMAL, z, master, lsol
        return inc, ub, OPTIMAL, z, master, lsol
    sub = build_master(pool, y, P, config.cprime, columns=keep)
    msol = _solve_master_mip(sub, time_limit, config.backend)
    if msol.x is None or msol.objective > ub + 1e-12:
        return inc, ub, msol.status if msol.x is None else OPTIMAL, z, master, lsol
    chosen = [int(keep[k]) for k in np.flatnonzero(sub.rule_part(msol.x) > 0.5)]
    obj = hamming_objective(cov[:, chosen], y, P)
    if obj > ub:
        chosen, obj = inc, ub
    return chosen, obj, msol.status, z, master, lsol


def _close_gap(pool, y, P, config, master, lsol, lp_obj, mip_obj) -> bool:
    """Add every conjunction whose reduced cost is below the MIP-LP gap.

    Any integer solution better than the incumbent can only use such columns, so the
    MIP over the enlarged pool is optimal over all rule sets.
    """
    gap = mip_obj - lp_obj
    if gap <= RC_TOL:
        return True
    mu, lam = master_duals(master, lsol, len(y))
    omega = point_weights(y, P, mu)
    found, exhausted, _ = _tree(pool.space, omega, lam, config.cap_literals, pool, 0.0,
                                None, collect_below=gap + 1e-9, collect_cap=config.closure_cap)
    for k in found:
        pool.add(k)
    return exhausted
