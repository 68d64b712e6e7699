"""Command-line interface: ``drrules {train,experiment,eval,cycling,bounds}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import bounds
from .dataset import (PRESETS, DatasetError, Schema, apply_binarization, binarize, load_config,
                      load_named, split)
from .dro import DroError, RobustBall, get_divergence
from .ensemble import EnsembleError, TrainConfig, TrainedModel, cycling_diagnostic, find_modes, train
from .colgen import ColgenConfig, ColgenError
from .report import run_experiment
from .rules import RuleError, accuracy

log = logging.getLogger("drrules")


class CliError(Exception):
    pass


# ----------------------------------------------------------------- arguments
def _data_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--data", required=required,
                   help=f"CSV path or bundled dataset name ({', '.join(PRESETS)})")
    p.add_argument("--preset", choices=PRESETS, help="named schema for the CSV")
    p.add_argument("--config", help="schema file (key = value) instead of a preset")
    p.add_argument("--label-col", help="label column (overrides the schema)")
    p.add_argument("--n-bins", type=int, help="quantile bins for numeric columns (default 10)")


def _train_args(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cprime", type=int, default=d.cprime, help="member complexity C'")
    p.add_argument("--cmax", type=int, default=d.cmax, help="ensemble complexity cap")
    p.add_argument("--rho", type=float, default=d.rho, help="divergence ball radius")
    p.add_argument("--divergence", choices=("chi2", "kl"), default=d.divergence)
    p.add_argument("--delta", type=float, default=None,
                   help="separation around 1/2 (default 1/(2 floor(C/C')))")
    p.add_argument("--patience", type=int, default=d.patience)
    p.add_argument("--improve-thresh", type=float, default=d.improve_thresh)
    p.add_argument("--weights-for-ip", choices=("p0", "pn"), default=d.weights_for_ip)
    p.add_argument("--pricing-time", type=float, default=d.pricing_time)
    p.add_argument("--colgen-time", type=float, default=d.colgen_time)
    p.add_argument("--colgen-iters", type=int, default=d.colgen_iters)
    p.add_argument("--ip-time", type=float, default=d.ip_time)
    p.add_argument("--max-outer", type=int, default=d.max_outer)
    p.add_argument("--backend", choices=("highs", "internal"), default=d.backend,
                   help="LP/MIP backend")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drrules", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", help="train one model")
    _data_args(p)
    _train_args(p)
    p.add_argument("--train-frac", type=float, default=None,
                   help="hold out a test split (default: train on all rows)")
    p.add_argument("--timings", action="store_true", help="keep wall time in the history")
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("experiment", help="repeated random splits with a summary row")
    _data_args(p)
    _train_args(p)
    p.add_argument("--splits", type=int, default=20)
    p.add_argument("--train-frac", type=float, default=0.7)
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: CPUs)")
    p.add_argument("--timings", action="store_true", help="add wall time to each record")
    p.add_argument("--out", help="JSON report path")

    p = sub.add_parser("eval", help="evaluate a saved model")
    p.add_argument("--model", required=True)
    _data_args(p)
    p.add_argument("--out", help="JSON metrics path")

    p = sub.add_parser("cycling", help="0-1 loss cycling diagnostic")
    _data_args(p)
    p.add_argument("--rho", type=float, default=0.05)
    p.add_argument("--divergence", choices=("chi2", "kl"), default="chi2")
    p.add_argument("--cprime", type=int, default=5)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--train-frac", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=("highs", "internal"), default="highs")
    p.add_argument("--out", help="CSV path (default stdout)")

    p = sub.add_parser("bounds", help="closed-form generalization diagnostics")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--cmax", type=int, default=30)
    p.add_argument("--cprime", type=int, default=5)
    p.add_argument("--conf-delta", type=float, default=0.05, help="confidence level delta")
    p.add_argument("--margin", type=float, default=0.5, help="margin parameter")
    return ap


# ------------------------------------------------------------------- helpers
def _load_table(args):
    schema: Optional[Schema] = load_config(args.config) if args.config else None
    name = args.data
    if schema is None and args.preset is None and name not in PRESETS:
        if not args.label_col:
            raise CliError("a CSV needs --preset, --config or --label-col")
        schema = Schema(label=args.label_col)
    if args.label_col:
        if schema is None:
            schema = load_named(name, args.preset)[1]
        schema = replace(schema, label=args.label_col)
    table, schema = load_named(name, args.preset, schema, args.n_bins)
    label = schema.name or args.preset or Path(str(name)).stem
    return table, schema, label


def _load_dataset(args):
    table, schema, label = _load_table(args)
    return binarize(table, schema.n_bins, name=label)


def _config(args) -> TrainConfig:
    return TrainConfig(cprime=args.cprime, cmax=args.cmax, rho=args.rho, divergence=args.divergence,
                       delta=args.delta, patience=args.patience, improve_thresh=args.improve_thresh,
                       ip_time=args.ip_time, weights_for_ip=args.weights_for_ip,
                       pricing_time=args.pricing_time, colgen_time=args.colgen_time,
                       colgen_iters=args.colgen_iters, max_outer=args.max_outer,
                       backend=args.backend, seed=args.seed)


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


# ------------------------------------------------------------------ commands
def cmd_train(args) -> int:
    ds = _load_dataset(args)
    cfg = _config(args)
    test = None
    if args.train_frac is not None:
        ds, test = split(ds, args.train_frac, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hist_path = out / "history.jsonl"
    with open(hist_path, "w", encoding="utf-8") as fh:
        def emit(rec):
            if not args.timings:
                rec = {k: v for k, v in rec.items() if k != "seconds"}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
            log.info("iteration %d: objective %.6g, C=%d", rec["iteration"],
                     rec["best_objective"], rec["best_C"])

        model = train(ds, cfg, on_iteration=emit)
    (out / "model.json").write_text(model.to_json() + "\n", encoding="utf-8")
    (out / "model.txt").write_text(model.ensemble.format(ds.feature_names) + "\n", encoding="utf-8")
    print(model.ensemble.format(ds.feature_names))
    line = (f"complexity {model.complexity}  members {len(model.ensemble)}  "
            f"outer iterations {model.outer_iterations}  "
            f"train accuracy {100 * accuracy(model.predict(ds.X), ds.y):.2f}%")
    if test is not None:
        line += f"  test accuracy {100 * accuracy(model.predict(test.X), test.y):.2f}%"
    print(line)
    for f in model.flags:
        print(f"note: {f}")
    return 0


def cmd_experiment(args) -> int:
    ds = _load_dataset(args)
    cfg = _config(args)

    def progress(rec):
        log.info("split %d: test %.2f%%, complexity %d, n=%d", rec["split"], rec["test_accuracy"],
                 rec["complexity"], rec["outer_iterations"])

    rep = run_experiment(ds, cfg, args.splits, args.train_frac, args.seed, args.workers,
                         args.timings, progress)
    text = rep.to_json()
    if args.out:
        _write(args.out, text)
    sys.stdout.write(rep.table())
    return 0


def evaluate(model: TrainedModel, ds) -> dict:
    pred = model.predict(ds.X)
    y = ds.y
    rates = []
    for k, (h, v) in enumerate(model.ensemble.members):
        for t in h.rules:
            rates.append({"member": k, "weight": v, "rule": t.format(ds.feature_names),
                          "firing_rate": float(np.mean(t.evaluate(ds.X)))})
    return {
        "N": int(ds.n),
        "accuracy": 100.0 * accuracy(pred, y),
        "tp": int(np.sum((pred == 1) & (y == 1))),
        "fp": int(np.sum((pred == 1) & (y == 0))),
        "tn": int(np.sum((pred == 0) & (y == 0))),
        "fn": int(np.sum((pred == 0) & (y == 1))),
        "complexity": model.complexity,
        "rules": rates,
    }


def cmd_eval(args) -> int:
    try:
        model = TrainedModel.from_dict(json.loads(Path(args.model).read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CliError(f"cannot parse model file {args.model}: {exc}") from None
    table, _, label = _load_table(args)
    ds = apply_binarization(table, model.feature_meta, name=label)
    m = evaluate(model, ds)
    if args.out:
        _write(args.out, json.dumps(m, sort_keys=True, indent=1) + "\n")
    print(f"accuracy {m['accuracy']:.2f}%  tp {m['tp']}  fp {m['fp']}  tn {m['tn']}  fn {m['fn']}")
    for r in m["rules"]:
        print(f"  w={r['weight']:.6g}  fires {100 * r['firing_rate']:5.1f}%  {r['rule']}")
    return 0


def cmd_cycling(args) -> int:
    ds = _load_dataset(args)
    if args.train_frac is not None:
        ds, _ = split(ds, args.train_frac, args.seed)
    ball = RobustBall(get_divergence(args.divergence), args.rho)
    res = cycling_diagnostic(ds, ball, args.cprime, args.iters,
                             ColgenConfig(cprime=args.cprime, backend=args.backend))
    rows = res.rows()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        fh = open(args.out, "w", newline="", encoding="utf-8")
    else:
        fh = sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "bin", "instantaneous", "running_average"])
        for it, b, inst, avg in rows:
            w.writerow([it, f"{b:.2f}", inst, avg])
    finally:
        if fh is not sys.stdout:
            fh.close()
    last = res.average[-1]
    modes = [k / (last.size - 1) for k in find_modes(last)]
    print(f"running-average modes after {args.iters} iterations: "
          + ", ".join(f"{m:.2f}" for m in modes), file=sys.stderr)
    return 0


def cmd_bounds(args) -> int:
    rep = bounds.report(args.N, args.d, args.cmax, args.cprime, args.conf_delta, args.margin)
    if "error" in rep:
        raise CliError(rep["error"])
    for k, v in rep.items():
        print(f"{k:>20} {v}")
    return 0


COMMANDS = {"train": cmd_train, "experiment": cmd_experiment, "eval": cmd_eval,
            "cycling": cmd_cycling, "bounds": cmd_bounds}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except (CliError, DatasetError, RuleError, EnsembleError, ColgenError, DroError,
            bounds.BoundError, FileNotFoundError, ValueError) as exc:
        print(f"drrules {args.cmd}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
