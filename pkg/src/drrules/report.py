"""Experiment harness: repeated train/test splits, per-split records and t-based intervals."""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy import stats

from . import bounds
from .dataset import BinaryDataset, split
from .ensemble import TrainConfig, train
from .rules import accuracy

REPORT_FORMAT = "drrules-report/1"
METRICS = ("test_accuracy", "train_accuracy", "complexity", "outer_iterations")


def split_seeds(root: int, k: int) -> List[int]:
    """``k`` independent 32-bit seeds derived from one root seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(root).spawn(k)]


def mean_ci(values, level: float = 0.95):
    """Mean and Student-t half-width with ``K-1`` degrees of freedom (None for K < 2)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values")
    m = float(np.mean(v))
    if v.size < 2:
        return m, None
    half = float(stats.t.ppf(0.5 + level / 2, v.size - 1) * np.std(v, ddof=1) / math.sqrt(v.size))
    return m, half


def aggregate(records: List[dict]) -> Dict[str, dict]:
    out = {}
    for key in METRICS:
        m, h = mean_ci([r[key] for r in records])
        out[key] = {"mean": m, "ci95": h}
    return out


@dataclass
class ExperimentReport:
    dataset: dict
    config: dict
    records: List[dict]
    aggregates: Dict[str, dict] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = aggregate(self.records)

    def check(self) -> None:
        """Aggregates must be recomputable from the records."""
        if aggregate(self.records) != self.aggregates:
            raise ValueError("report aggregates disagree with the per-split records")
        for r in self.records:
            if not 0.0 <= r["test_accuracy"] <= 100.0:
                raise ValueError("accuracy outside [0, 100]")

    def to_dict(self) -> dict:
        return {"format": REPORT_FORMAT, "dataset": self.dataset, "config": self.config,
                "records": self.records, "aggregates": self.aggregates,
                "diagnostics": self.diagnostics}

    def to_json(self) -> str:
        self.check()
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @staticmethod
    def from_dict(d: dict) -> "ExperimentReport":
        if d.get("format") != REPORT_FORMAT:
            raise ValueError("not an experiment report")
        rep = ExperimentReport(d["dataset"], d["config"], d["records"], d["aggregates"],
                               d.get("diagnostics", {}))
        rep.check()
        return rep

    def table(self) -> str:
        """Aligned text table with ``mean(half-width)`` cells."""
        def cell(key, scale=1.0, digits=1):
            a = self.aggregates[key]
            h = "-" if a["ci95"] is None else f"{a['ci95'] * scale:.{digits}f}"
            return f"{a['mean'] * scale:.{digits}f}({h})"

        head = ["dataset", "N", "d", "splits", "test acc %", "train acc %", "complexity", "outer n"]
        row = [str(self.dataset.get("name", "")), str(self.dataset["N"]), str(self.dataset["d"]),
               str(len(self.records)), cell("test_accuracy"), cell("train_accuracy"),
               cell("complexity"), cell("outer_iterations")]
        widths = [max(len(a), len(b)) for a, b in zip(head, row)]
        fmt = "  ".join(f"{{:>{w}}}" for w in widths)
        return fmt.format(*head) + "\n" + fmt.format(*row) + "\n"


def run_split(ds: BinaryDataset, cfg: TrainConfig, train_frac: float, index: int, seed: int,
              timings: bool = False) -> dict:
    t0 = time.monotonic()
    tr, te = split(ds, train_frac, seed)
    run_cfg = TrainConfig(**{**cfg.to_dict(), "seed": seed})
    model = train(tr, run_cfg)
    rec = {
        "split": index,
        "seed": seed,
        "n_train": tr.n,
        "n_test": te.n,
        "test_accuracy": 100.0 * accuracy(model.predict(te.X), te.y),
        "train_accuracy": 100.0 * accuracy(model.predict(tr.X), tr.y),
        "complexity": model.complexity,
        "outer_iterations": model.outer_iterations,
        "members": len(model.ensemble),
        "train_objective": model.train_objective,
        "model": model.ensemble.to_dict(),
        "flags": list(model.flags),
    }
    if timings:
        rec["wall_seconds"] = time.monotonic() - t0
    return rec


def _run_split_star(args):
    return run_split(*args)


def run_experiment(ds: BinaryDataset, cfg: TrainConfig, splits: int = 20, train_frac: float = 0.7,
                   seed: int = 0, workers: Optional[int] = None, timings: bool = False,
                   progress=None) -> ExperimentReport:
    """Train on ``splits`` random partitions; records are ordered by split index."""
    if splits < 1:
        raise ValueError("need at least one split")
    seeds = split_seeds(seed, splits)
    jobs = [(ds, cfg, train_frac, k, s, timings) for k, s in enumerate(seeds)]
    workers = workers or os.cpu_count() or 1
    records: List[dict] = []
    if workers <= 1 or splits == 1:
        for job in jobs:
            records.append(run_split(*job))
            if progress:
                progress(records[-1])
    else:
        with ProcessPoolExecutor(max_workers=min(workers, splits)) as pool:
            for rec in pool.map(_run_split_star, jobs):
                records.append(rec)
                if progress:
                    progress(rec)
    records.sort(key=lambda r: r["split"])
    n_train = records[0]["n_train"]
    diag = bounds.report(n_train, ds.d, cfg.cmax, cfg.cprime)
    diag["empirical_gap_mean"] = float(np.mean([r["train_accuracy"] - r["test_accuracy"]
                                                for r in records]) / 100.0)
    dataset = {"name": ds.name, "N": ds.n, "d": ds.d, "fingerprint": ds.fingerprint()}
    config = {**cfg.to_dict(), "splits": splits, "train_frac": train_frac, "root_seed": seed}
    config.pop("seed", None)
    return ExperimentReport(dataset, config, records, diagnostics=diag)
