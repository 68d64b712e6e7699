"""CPLEX LP text format dump, for debugging."""

from __future__ import annotations

import math
from typing import Iterable, Optional

import numpy as np

from .problem import LpProblem


def _names(given, prefix, n):
    return list(given) if given is not None else [f"{prefix}{i}" for i in range(n)]


def _terms(coefs: np.ndarray, names) -> str:
    parts = []
    for a, nm in zip(coefs, names):
        if a == 0:
            continue
        sgn = "-" if a < 0 else "+"
        parts.append(f"{sgn} {abs(a):.12g} {nm}")
    if not parts:
        return "0 " + names[0] if names else "0"
    s = " ".join(parts)
    return s[2:] if s.startswith("+ ") else s


def to_lp_string(p: LpProblem, integer: Optional[Iterable[int]] = None) -> str:
    """Render ``p`` in LP format; ``integer`` indices go into a Generals section."""
    vn = _names(p.var_names, "x", p.n_vars)
    rn = _names(p.row_names, "r", p.n_rows)
    sense = {"<=": "<=", ">=": ">=", "=": "="}
    out = ["Maximize" if p.maximize else "Minimize", f" obj: {_terms(p.c, vn)}", "Subject To"]
    for i in range(p.n_rows):
        out.append(f" {rn[i]}: {_terms(p.A[i], vn)} {sense[p.senses[i]]} {p.b[i]:.12g}")
    out.append("Bounds")
    for j in range(p.n_vars):
        lo, hi = p.lb[j], p.ub[j]
        lo_s = "-inf" if lo == -math.inf else f"{lo:.12g}"
        hi_s = "+inf" if hi == math.inf else f"{hi:.12g}"
        if lo == hi:
            out.append(f" {vn[j]} = {lo_s}")
        else:
            out.append(f" {lo_s} <= {vn[j]} <= {hi_s}")
    ints = sorted(set(integer or ()))
    if ints:
        out.append("Generals")
        out.append(" " + " ".join(vn[j] for j in ints))
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(p: LpProblem, path, integer=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_lp_string(p, integer))
