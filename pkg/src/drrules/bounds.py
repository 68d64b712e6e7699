"""Closed-form generalization diagnostics for rule sets and their convex combinations.

All functions are pure.  ``log`` is the natural logarithm throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional


class BoundError(ValueError):
    pass


@dataclass(frozen=True)
class BoundInputs:
    N: int
    d: int
    C: int
    delta: float = 0.05
    margin: float = 0.5
    cprime: Optional[int] = None

    def __post_init__(self):
        if self.N < 1:
            raise BoundError("N must be positive")
        if self.d < 1:
            raise BoundError("d must be positive")
        _check_budget(self.d, self.C)
        if self.cprime is not None:
            _check_budget(self.d, self.cprime)
        if not 0 < self.delta < 1:
            raise BoundError("delta must lie in (0, 1)")
        if not 0 < self.margin < 1:
            raise BoundError("margin parameter must lie in (0, 1)")


def _check_budget(d: int, C: int) -> None:
    if C < 2:
        raise BoundError("complexity budget must be at least 2")
    if not 2 * d > C - 1:
        raise BoundError("need 2d > C - 1")


def log_size_lower(d: int, C: int) -> float:
    """``(C-1) log(2d/(C-1))``."""
    _check_budget(d, C)
    return (C - 1) * math.log(2 * d / (C - 1))


def log_size_upper(d: int, C: int, V: float = 1.0) -> float:
    """``log V + (C-1) log(2de/(C-1))``; ``V`` is an unspecified constant, 1 by default."""
    _check_budget(d, C)
    if not V > 0:
        raise BoundError("V must be positive")
    return math.log(V) + (C - 1) * math.log(2 * d * math.e / (C - 1))


def size_bounds(d: int, C: int, V: float = 1.0):
    """(lower, upper) bounds on ``log |H(C)|``.

    >>> round(size_bounds(10, 2)[0], 6) == round(math.log(20), 6)
    True
    """
    return log_size_lower(d, C), log_size_upper(d, C, V)


def prop1_gap(inp: BoundInputs) -> float:
    """Uniform gap between true and empirical 0-1 loss for rule sets with ``c(h) <= C``.

    >>> round(prop1_gap(BoundInputs(N=100, d=10, C=5, delta=0.05)), 5)
    0.43436
    """
    return math.sqrt((2.0 / inp.N) * (log_size_lower(inp.d, inp.C) + math.log(1.0 / inp.delta)))


@dataclass(frozen=True)
class Prop2Ingredients:
    M: int
    M_real: float
    lambda_M: float
    delta_M: float
    log_H: float


def prop2_ingredients(inp: BoundInputs) -> Prop2Ingredients:
    """Sample count ``M`` and deviation ``lambda_M`` for ensembles of ``c(h) <= C'`` members.

    ``M = (4/Delta^2) log(N / log|H(C')|)`` rounded up, with the lower bound for
    ``log|H|``; ``lambda_M = sqrt(log((M+1)|H|^M / delta_M) / (2N))`` and
    ``delta_M = delta (1/M - 1/(M+1))``.  ``C'`` defaults to ``C``.
    """
    cp = inp.C if inp.cprime is None else inp.cprime
    logH = log_size_lower(inp.d, cp)
    if not inp.N > logH:
        raise BoundError(f"need N > log|H(C')| = {logH:.6g}")
    if logH <= 0:
        raise BoundError("log|H(C')| must be positive")
    M_real = 4.0 / inp.margin ** 2 * math.log(inp.N / logH)
    M = max(1, math.ceil(M_real))
    return Prop2Ingredients(M, M_real, lambda_m(inp.N, M, logH, inp.delta), delta_m(inp.delta, M), logH)


def delta_m(delta: float, M: int) -> float:
    return delta * (1.0 / M - 1.0 / (M + 1))


def lambda_m(N: int, M: int, log_H: float, delta: float) -> float:
    """``sqrt(log((M+1) |H|^M / delta_M) / (2N))`` evaluated in log space."""
    inner = math.log(M + 1) + M * log_H - math.log(delta_m(delta, M))
    return math.sqrt(inner / (2.0 * N))


def report(N: int, d: int, C: int, cprime: int, delta: float = 0.05, margin: float = 0.5) -> dict:
    """All diagnostics as a flat dict; undefined entries are None."""
    out = {"N": N, "d": d, "C": C, "cprime": cprime, "delta": delta, "margin": margin}
    try:
        inp = BoundInputs(N, d, C, delta, margin, cprime)
    except BoundError as exc:
        out["error"] = str(exc)
        return out
    out["prop1_gap_C"] = prop1_gap(inp)
    out["prop1_gap_cprime"] = prop1_gap(BoundInputs(N, d, cprime, delta, margin))
    lo, hi = size_bounds(d, cprime)
    out["log_H_cprime_lower"], out["log_H_cprime_upper"] = lo, hi
    try:
        p2 = prop2_ingredients(inp)
        out["M"], out["lambda_M"] = p2.M, p2.lambda_M
    except BoundError:
        out["M"] = out["lambda_M"] = None
    return out
