"""Growing a DRO-reweighted collection of rule sets and selecting sparse convex ensembles."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .colgen import ColgenConfig, ColumnPool, LiteralSpace, generate_ruleset
from .dataset import BinaryDataset, FeatureMeta, empirical_pmf
from .dro import RobustBall, get_divergence, maximize_robust_loss
from .rules import Conjunction, Ensemble, RuleSet, accuracy, margin_loss_from_scores
from .solver import OPTIMAL, LpProblem, MipProblem, solve_mip

log = logging.getLogger(__name__)

PRUNE_TOL = 1e-9


class EnsembleError(RuntimeError):
    pass


# ----------------------------------------------------------------- collection
@dataclass
class Collection:
    """Members ``h_1..h_n`` with training outputs and the running equal-weight aggregate."""

    y: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    members: List[RuleSet] = field(default_factory=list)
    outputs: List[np.ndarray] = field(default_factory=list)  # h_k(x_i) on the training rows
    counts: Optional[np.ndarray] = None  # sum_k h_k(x_i), so F_n = counts / n exactly
    P: Optional[np.ndarray] = None
    robust_value: float = 0.0

    @classmethod
    def empty(cls, y) -> "Collection":
        y = np.asarray(y, dtype=np.int8)
        return cls(y, [], [], np.zeros(y.size, dtype=np.int64), empirical_pmf(y.size), 0.0)

    @property
    def n(self) -> int:
        return len(self.members)

    @property
    def F(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros(self.counts.size)
        return self.counts / self.n

    def add(self, h: RuleSet, out: np.ndarray) -> None:
        self.members.append(h)
        self.outputs.append(np.asarray(out, dtype=np.uint8))
        self.counts = self.counts + self.outputs[-1]

    @property
    def H(self) -> np.ndarray:
        """N x n matrix of member outputs."""
        return np.column_stack(self.outputs) if self.outputs else np.zeros((self.counts.size, 0), np.uint8)


def grow_step(col: Collection, ds: BinaryDataset, ball: RobustBall, colgen_cfg: ColgenConfig,
              pool: Optional[ColumnPool] = None):
    """Add the column-generation rule set under ``col.P`` and refresh the worst-case pmf."""
    res = generate_ruleset(ds, col.P, colgen_cfg, pool)
    col.add(res.ruleset, res.ruleset.evaluate(ds.X))
    z = margin_loss_from_scores(col.F, ds.y)
    sol = maximize_robust_loss(z, ball)
    col.P = sol.P
    col.robust_value = sol.value
    return col, res, sol


# ------------------------------------------------------------- sparse selection
@dataclass
class Selection:
    ensemble: Ensemble
    objective: float
    C: float
    delta: float
    status: str
    gap: float = 0.0
    member_index: List[int] = field(default_factory=list)
    weights: List[float] = field(default_factory=list)


def default_delta(C: float, cprime: float) -> float:
    """Half the weight increment of ``floor(C / C')`` equally weighted members."""
    m = max(1, int(math.floor(C / cprime + 1e-12)))
    return 1.0 / (2.0 * m)


def build_ensemble_ip(H: np.ndarray, y: np.ndarray, p: np.ndarray, costs: np.ndarray,
                      C: float, delta: float):
    """MIP over (v, w, xi); identical (output-pattern, label) rows share one xi.

    Returns (MipProblem, n_members).
    """
    H = np.asarray(H, dtype=np.uint8)
    y = np.asarray(y)
    p = np.asarray(p, dtype=float)
    n = H.shape[1]
    keep = p > 0
    keys = np.hstack([H[keep], y[keep, None].astype(np.uint8)])
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = np.asarray(inv).ravel()
    pw = np.bincount(inv, weights=p[keep], minlength=uniq.shape[0])
    G = uniq[:, :n].astype(float)
    gy = uniq[:, n]
    R = uniq.shape[0]
    nv = 2 * n + R
    c = np.concatenate([np.zeros(2 * n), pw])
    rows, senses, b = [], [], []
    for r in range(R):
        row = np.zeros(nv)
        row[:n] = G[r]
        if gy[r] == 0:
            row[2 * n + r] = -1.0
            senses.append("<=")
            b.append(0.5 - delta)
        else:
            row[2 * n + r] = 1.0
            senses.append(">=")
            b.append(0.5 + delta)
        rows.append(row)
    row = np.zeros(nv); row[:n] = 1.0
    rows.append(row); senses.append("="); b.append(1.0)
    for k in range(n):
        row = np.zeros(nv); row[k] = 1.0; row[n + k] = -1.0
        rows.append(row); senses.append("<="); b.append(0.0)
    row = np.zeros(nv); row[n:2 * n] = costs
    rows.append(row); senses.append("<="); b.append(float(C))
    lb = np.zeros(nv)
    ub = np.concatenate([np.ones(2 * n), np.full(R, np.inf)])
    lp = LpProblem(c, np.array(rows), senses, np.array(b), lb=lb, ub=ub)
    return MipProblem(lp, integer=range(n, 2 * n)), n


def select_sparse(col: Collection, P, C: float, delta: float, time_limit: Optional[float] = 600.0,
                  backend: str = "highs") -> Selection:
    """Sparse convex combination of the collection with total complexity at most ``C``."""
    if col.n == 0:
        raise EnsembleError("collection is empty")
    if not 0.0 < delta < 0.5:
        raise EnsembleError("delta must lie in (0, 1/2)")
    H = col.H
    costs_all = np.array([h.complexity for h in col.members], dtype=float)
    if C < costs_all.min():
        raise EnsembleError(f"infeasible: C={C} below the cheapest member ({costs_all.min():g})")
    # merge members with identical training outputs, keeping the cheapest (then earliest)
    groups: Dict[bytes, int] = {}
    for k in range(col.n):
        if costs_all[k] > C:
            continue
        key = H[:, k].tobytes()
        j = groups.get(key)
        if j is None or costs_all[k] < costs_all[j]:
            groups[key] = k
    reps = sorted(groups.values())
    return _select(col, reps, H, costs_all, P, C, delta, time_limit, backend)


def _select(col, reps, H, costs_all, P, C, delta, time_limit, backend) -> Selection:
    y = col.y
    mip, n = build_ensemble_ip(H[:, reps], y, np.asarray(P, dtype=float), costs_all[reps], C, delta)
    mip.time_limit = time_limit
    sol = solve_mip(mip, backend=backend)
    if sol.x is None:
        raise EnsembleError(f"sparse ensemble IP returned {sol.status}")
    v = np.clip(sol.x[:n], 0.0, None)
    w = sol.x[n:2 * n] > 0.5
    v = np.where(w & (v > PRUNE_TOL), v, 0.0)
    if v.sum() <= 0:
        raise EnsembleError("IP returned all-zero weights")
    v = v / v.sum()
    idx = [reps[k] for k in range(n) if v[k] > 0]
    wts = [float(v[k]) for k in range(n) if v[k] > 0]
    ens = Ensemble([(col.members[k], wk) for k, wk in zip(idx, wts)])
    return Selection(ens, float(sol.objective), C, delta, sol.status, float(sol.gap or 0.0), idx, wts)


def ip_objective(F: np.ndarray, y, p, delta: float) -> float:
    """Objective of the ensemble IP at aggregate scores ``F`` (for checks)."""
    F = np.asarray(F, dtype=float)
    y = np.asarray(y)
    xi = np.where(y == 0, np.maximum(0.0, F - (0.5 - delta)), np.maximum(0.0, 0.5 + delta - F))
    return float(np.sum(np.asarray(p) * xi))


# ------------------------------------------------------------------ training
@dataclass
class TrainConfig:
    cprime: int = 5
    cmax: int = 30
    rho: float = 0.05
    divergence: str = "chi2"
    delta: Optional[float] = None  # None: half the weight step of floor(C/C') members
    patience: int = 20
    improve_thresh: float = 0.005
    ip_time: float = 600.0
    weights_for_ip: str = "p0"
    pricing_time: float = 30.0
    colgen_time: float = 300.0
    colgen_iters: int = 5
    max_outer: int = 500
    backend: str = "highs"
    seed: int = 0

    def __post_init__(self):
        if self.cprime < 2:
            raise ValueError("cprime must be at least 2")
        if self.cmax < self.cprime:
            raise ValueError("cmax must be at least cprime")
        if self.weights_for_ip not in ("p0", "pn"):
            raise ValueError("weights_for_ip must be 'p0' or 'pn'")
        if self.delta is not None and not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")
        if self.patience < 1 or self.improve_thresh < 0:
            raise ValueError("patience must be positive and the threshold nonnegative")
        get_divergence(self.divergence)

    def colgen(self) -> ColgenConfig:
        return ColgenConfig(cprime=self.cprime, pricing_time=self.pricing_time,
                            colgen_time=self.colgen_time, max_iters=self.colgen_iters,
                            backend=self.backend)

    def ball(self) -> RobustBall:
        return RobustBall(get_divergence(self.divergence), self.rho)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainedModel:
    ensemble: Ensemble
    history: List[dict]
    config: dict
    fingerprint: str
    feature_meta: List[FeatureMeta]
    outer_iterations: int
    train_objective: float
    flags: List[str] = field(default_factory=list)

    @property
    def complexity(self) -> int:
        return self.ensemble.complexity

    def predict(self, X) -> np.ndarray:
        return self.ensemble.predict(X)

    def to_dict(self) -> dict:
        return {
            "format": "drrules-model/1",
            "ensemble": self.ensemble.to_dict(),
            "complexity": self.complexity,
            "outer_iterations": self.outer_iterations,
            "train_objective": self.train_objective,
            "config": self.config,
            "fingerprint": self.fingerprint,
            "feature_meta": [m.to_dict() for m in self.feature_meta],
            "flags": list(self.flags),
        }

    def to_json(self, history: bool = False) -> str:
        d = self.to_dict()
        if history:
            d["history"] = self.history
        return json.dumps(d, sort_keys=True, indent=1)

    @staticmethod
    def from_dict(d: dict) -> "TrainedModel":
        if d.get("format") != "drrules-model/1":
            raise ValueError("not a drrules model file")
        return TrainedModel(
            ensemble=Ensemble.from_dict(d["ensemble"]),
            history=d.get("history", []),
            config=d["config"],
            fingerprint=d["fingerprint"],
            feature_meta=[FeatureMeta.from_dict(m) for m in d["feature_meta"]],
            outer_iterations=int(d["outer_iterations"]),
            train_objective=float(d["train_objective"]),
            flags=list(d.get("flags", [])),
        )


def _constant_model(ds: BinaryDataset, cfg: TrainConfig, label: int) -> TrainedModel:
    if label == 1:
        # x_0 = 1 OR x_0 = 0 fires everywhere
        h = RuleSet([Conjunction([(0, 1)]), Conjunction([(0, 0)])])
        ens = Ensemble([(h, 1.0)])
    else:
        ens = Ensemble([(RuleSet(), 1.0)])
    flag = f"degenerate dataset: every label is {label}; constant classifier"
    return TrainedModel(ens, [], cfg.to_dict(), ds.fingerprint(), list(ds.feature_meta), 0, 0.0, [flag])


def budgets(cprime: int, cmax: int) -> List[int]:
    """``C = m C'`` for ``m = 2, 3, ...`` up to ``cmax`` (just ``cmax`` if ``2 C' > cmax``)."""
    out = list(range(2 * cprime, cmax + 1, cprime))
    return out or [cmax]


def rel_improvement(best: Optional[float], new: float) -> float:
    if best is None:
        return math.inf
    return (best - new) / max(abs(best), 1e-9)


def train(ds: BinaryDataset, cfg: TrainConfig, on_iteration=None) -> TrainedModel:
    """Alternate growth and sparse selection until ``patience`` iterations without
    relative improvement of at least ``improve_thresh``; return the best ensemble."""
    labels = set(np.unique(ds.y).tolist())
    if len(labels) < 2:
        return _constant_model(ds, cfg, labels.pop() if labels else 0)
    ball = cfg.ball()
    ccfg = cfg.colgen()
    col = Collection.empty(ds.y)
    P0 = empirical_pmf(ds.n)
    pool = ColumnPool(LiteralSpace(ds.X, ccfg.use_negations))
    history: List[dict] = []
    best: Optional[Selection] = None
    best_iter = 0
    best_obj: Optional[float] = None  # reference for the improvement test
    stall = 0
    flags: List[str] = []
    n = 0
    while n < cfg.max_outer:
        t0 = time.monotonic()
        col, cres, rsol = grow_step(col, ds, ball, ccfg, pool)
        n += 1
        weights = P0 if cfg.weights_for_ip == "p0" else col.P
        inner = []
        it_best: Optional[Selection] = None
        prev: Optional[float] = None
        for C in budgets(cfg.cprime, cfg.cmax):
            delta = cfg.delta if cfg.delta is not None else default_delta(C, cfg.cprime)
            sel = select_sparse(col, weights, C, delta, cfg.ip_time, cfg.backend)
            inner.append({"C": C, "delta": delta, "objective": sel.objective,
                          "complexity": sel.ensemble.complexity, "status": sel.status})
            if sel.status != OPTIMAL:
                flags.append(f"iteration {n}: ensemble IP at C={C} hit the time limit")
            if it_best is None or sel.objective < it_best.objective - 1e-12:
                it_best = sel
            stop = prev is not None and rel_improvement(prev, sel.objective) < cfg.improve_thresh
            prev = sel.objective
            if stop:
                break
        if it_best is None:
            raise EnsembleError("no feasible budget in the inner loop")
        imp = rel_improvement(best_obj, it_best.objective)
        if imp >= cfg.improve_thresh:
            best_obj = it_best.objective
            stall = 0
        else:
            stall += 1
        if (best is None or it_best.objective < best.objective - 1e-12
                or (abs(it_best.objective - best.objective) <= 1e-12
                    and it_best.ensemble.complexity < best.ensemble.complexity)):
            best, best_iter = it_best, n
        train_acc = accuracy(it_best.ensemble.predict(ds.X), ds.y)
        rec = {
            "iteration": n,
            "member": cres.ruleset.to_list(),
            "member_complexity": cres.ruleset.complexity,
            "colgen_objective": cres.objective,
            "colgen_lp_bound": cres.lp_bound,
            "colgen_iterations": cres.iterations,
            "robust_loss": rsol.value,
            "dro_case": rsol.case,
            "inner": inner,
            "best_C": it_best.C,
            "best_objective": it_best.objective,
            "train_accuracy": train_acc,
            "stall": stall,
        }
        rec["seconds"] = time.monotonic() - t0
        history.append(rec)
        log.debug("outer %s", json.dumps({k: v for k, v in rec.items() if k != "member"}))
        if on_iteration is not None:
            on_iteration(rec)
        if stall >= cfg.patience:
            break
    else:
        flags.append(f"stopped at max_outer={cfg.max_outer}")
    return TrainedModel(best.ensemble, history, cfg.to_dict(), ds.fingerprint(), list(ds.feature_meta),
                        n, best.objective, flags + [f"best ensemble from iteration {best_iter}"])


# ---------------------------------------------------------------- diagnostics
N_HIST_BINS = 21  # centers k/20


def histogram(values, n_bins: int = N_HIST_BINS) -> np.ndarray:
    """Counts with bins centered at ``k/(n_bins-1)``, ``k = 0..n_bins-1``."""
    v = np.asarray(values, dtype=float)
    k = np.floor(v * (n_bins - 1) + 0.5 + 1e-9).astype(int)
    return np.bincount(np.clip(k, 0, n_bins - 1), minlength=n_bins)


def find_modes(counts: Sequence[int], min_prominence: float = 0.0) -> List[int]:
    """Indices of local maxima (plateaus reported at their center), endpoints included."""
    from scipy.signal import find_peaks

    c = np.concatenate([[-1], np.asarray(counts, dtype=float), [-1]])
    peaks, _ = find_peaks(c, prominence=max(min_prominence, 1e-12), plateau_size=1)
    return [int(p) - 1 for p in peaks]


@dataclass
class CyclingResult:
    instantaneous: List[np.ndarray]  # per iteration: counts at loss 0 and 1
    average: List[np.ndarray]  # per iteration: running-average histogram
    losses: List[np.ndarray]

    def rows(self):
        """(iteration, bin center, instantaneous count, running-average count)."""
        out = []
        for it, (inst, avg) in enumerate(zip(self.instantaneous, self.average), 1):
            inst_full = np.zeros(avg.size, dtype=int)
            inst_full[0], inst_full[-1] = inst[0], inst[1]
            for b in range(avg.size):
                out.append((it, b / (avg.size - 1), int(inst_full[b]), int(avg[b])))
        return out


def cycling_diagnostic(ds: BinaryDataset, ball: RobustBall, cprime: int, n_iters: int,
                       colgen_cfg: Optional[ColgenConfig] = None) -> CyclingResult:
    """Simplified loop without aggregation: worst-case pmf from the current rule set's 0-1 losses."""
    if ds.n == 0:
        raise EnsembleError("empty dataset")
    cfg = colgen_cfg or ColgenConfig(cprime=cprime)
    P = empirical_pmf(ds.n)
    total = np.zeros(ds.n)
    pool = ColumnPool(LiteralSpace(ds.X, cfg.use_negations))
    inst, avg, losses = [], [], []
    for n in range(1, n_iters + 1):
        h = generate_ruleset(ds, P, cfg, pool).ruleset
        loss = np.abs(h.evaluate(ds.X).astype(int) - ds.y.astype(int)).astype(float)
        total += loss
        P = maximize_robust_loss(loss, ball).P
        inst.append(np.array([int(np.sum(loss == 0)), int(np.sum(loss == 1))]))
        avg.append(histogram(total / n))
        losses.append(loss)
    return CyclingResult(inst, avg, losses)
