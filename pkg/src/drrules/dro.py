"""phi-divergence balls around the empirical pmf and worst-case reweighting.

Given per-point losses ``z``, :func:`maximize_robust_loss` solves

    max_P  sum_i P_i z_i   s.t.  sum_i P_i = 1,  P >= 0,  (1/N) sum_i phi(N P_i) <= rho

through its Lagrangian: first the ``alpha = 0`` case (uniform mass on the argmax set),
otherwise a bisection on ``alpha`` with an inner solve for ``lambda``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp


class DroError(RuntimeError):
    pass


@dataclass(frozen=True)
class Divergence:
    kind: str
    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]
    dphi_inv: Callable[[np.ndarray], np.ndarray]
    dphi_at_zero: float  # limit of phi'(s) as s -> 0+

    @property
    def finite_at_zero(self) -> bool:
        return math.isfinite(self.dphi_at_zero)


def _chi2_phi(s):
    return (np.asarray(s, dtype=float) - 1.0) ** 2


def _kl_phi(s):
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)) - s + 1.0, 1.0)
    return out


CHI2 = Divergence(
    kind="chi2",
    phi=_chi2_phi,
    dphi=lambda s: 2.0 * (np.asarray(s, dtype=float) - 1.0),
    dphi_inv=lambda u: np.maximum(0.0, 1.0 + np.asarray(u, dtype=float) / 2.0),
    dphi_at_zero=-2.0,
)
KL = Divergence(
    kind="kl",
    phi=_kl_phi,
    dphi=lambda s: np.log(np.asarray(s, dtype=float)),
    dphi_inv=lambda u: np.exp(np.asarray(u, dtype=float)),
    dphi_at_zero=-math.inf,
)
DIVERGENCES = {"chi2": CHI2, "kl": KL}


def get_divergence(kind) -> Divergence:
    if isinstance(kind, Divergence):
        return kind
    try:
        return DIVERGENCES[kind]
    except KeyError:
        raise ValueError(f"unknown divergence {kind!r}; expected 'chi2' or 'kl'") from None


def dual_inverse(div, u) -> float:
    """``(phi')^{-1}(u)``; for chi2 clamped at 0."""
    out = get_divergence(div).dphi_inv(u)
    return float(out) if np.ndim(out) == 0 else out


def divergence_value(P, P0=None, div="chi2") -> float:
    """``(1/N) sum phi(N P_i)``, the divergence from the uniform pmf."""
    div = get_divergence(div)
    P = np.asarray(P, dtype=float).ravel()
    N = P.size
    if P0 is not None:
        P0 = np.asarray(P0, dtype=float).ravel()
        if P0.size != N:
            raise ValueError("P and P0 differ in length")
        if not np.allclose(P0, 1.0 / N, rtol=0, atol=1e-12):
            raise ValueError("only the uniform center distribution is supported")
    return float(np.mean(div.phi(N * P)))


@dataclass(frozen=True)
class RobustBall:
    divergence: Divergence
    rho: float
    eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "divergence", get_divergence(self.divergence))
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not 0 < self.eps <= 1e-3:
            raise ValueError("eps must lie in (0, 1e-3]")


@dataclass(frozen=True)
class RobustSolution:
    P: np.ndarray
    alpha: float
    lam: float
    value: float
    case: int
    lambda_iterations: int = 0
    alpha_iterations: int = 0

    @property
    def iterations(self) -> int:
        return self.lambda_iterations + self.alpha_iterations


def iteration_cap(width: float, eps: float) -> int:
    return 64 + max(0, math.ceil(math.log2(max(width, eps) / eps)))


# ------------------------------------------------------------------ inner solves
def _kl_weights(z, alpha):
    """``N P_i`` and ``lambda`` for KL at fixed alpha (closed form)."""
    a = z / alpha
    lse = logsumexp(a) - math.log(z.size)
    lam = alpha * lse
    logw = a - lse
    return np.exp(logw), logw, lam, 0


def _kl_div(z, alpha):
    w, logw, lam, it = _kl_weights(z, alpha)
    return float(np.mean(w * logw)), w, lam, it


def _chi2_lambda(z, alpha, eps):
    """Solve ``sum_i max(0, 1 + (z_i - lam)/(2 alpha)) = N`` for lam.

    Bisection on ``[min z - alpha phi'(N), max z]`` identifies the active set, then lam is
    recomputed exactly on that set.
    """
    N = z.size

    def total(lam):
        return float(np.sum(np.maximum(0.0, 1.0 + (z - lam) / (2.0 * alpha))))

    lo = float(z.min()) - alpha * 2.0 * (N - 1.0)
    hi = float(z.max())
    cap = iteration_cap(hi - lo, eps)
    it = 0
    if not (total(lo) >= N - 1e-12 and total(hi) <= N + 1e-12):
        raise DroError("lambda bracket does not enclose the root")
    while hi - lo > eps * max(1.0, abs(hi)) and it < cap:
        mid = 0.5 * (lo + hi)
        if total(mid) > N:
            lo = mid
        else:
            hi = mid
        it += 1
    lam = 0.5 * (lo + hi)
    # exact polish: lam on the active set {z_i > lam - 2 alpha}, iterated to a fixed point
    for _ in range(N + 1):
        act = z > lam - 2.0 * alpha
        k = int(act.sum())
        if k == 0:
            break
        new = (float(z[act].sum()) + 2.0 * alpha * (k - N)) / k
        if new == lam:
            break
        lam = new
    return lam, it


def _chi2_div(z, alpha, eps):
    lam, it = _chi2_lambda(z, alpha, eps)
    w = np.maximum(0.0, 1.0 + (z - lam) / (2.0 * alpha))
    return float(np.mean((w - 1.0) ** 2)), w, lam, it


def _chi2_alpha_polish(z, rho, alpha, eps):
    """Closed-form alpha for the active set at ``alpha``; None if the set changes."""
    N = z.size
    _, w, _, _ = _chi2_div(z, alpha, eps)
    act = w > 0
    k = int(act.sum())
    za = z[act]
    S = float(np.sum((za - za.mean()) ** 2))
    c = (N - k) / k
    denom = N * rho - k * c * c - (N - k)
    if S <= 0 or denom <= 0:
        return None
    a = math.sqrt(S / (4.0 * denom))
    _, w2, _, _ = _chi2_div(z, a, eps)
    if not np.array_equal(w2 > 0, act):
        return None
    return a


# --------------------------------------------------------------------- driver
def maximize_robust_loss(z, ball: RobustBall) -> RobustSolution:
    """Worst-case pmf in the ball for losses ``z`` (entries in [0, 1])."""
    z = np.asarray(z, dtype=float).ravel()
    N = z.size
    if N < 1:
        raise ValueError("need at least one loss value")
    if np.any(~np.isfinite(z)):
        raise ValueError("losses must be finite")
    div, rho, eps = ball.divergence, ball.rho, ball.eps
    zmax = float(z.max())
    if float(z.min()) == zmax:
        P = np.full(N, 1.0 / N)
        return RobustSolution(P, 0.0, zmax, zmax, case=1)

    # case 1: alpha = 0, uniform on the argmax set
    top = z == zmax
    k = int(top.sum())
    if divergence_value(np.where(top, 1.0 / k, 0.0), div=div) <= rho:
        P = np.where(top, 1.0 / k, 0.0)
        return RobustSolution(P, 0.0, zmax, float(P @ z), case=1)

    if div.kind == "kl":
        def D(a):
            return _kl_div(z, a)
    else:
        def D(a):
            return _chi2_div(z, a, eps)

    # D decreases in alpha; double until constraint slack turns positive
    hi = 1.0
    lam_iters = 0
    dh, wh, lamh, it = D(hi)
    lam_iters += it
    doublings = 0
    while dh > rho:
        hi *= 2.0
        doublings += 1
        if doublings > 200:
            raise DroError("failed to bracket alpha")
        dh, wh, lamh, it = D(hi)
        lam_iters += it
    lo = hi / 2.0 if doublings else 0.0
    cap = iteration_cap(hi - lo, eps)
    a_iters = 0
    while a_iters < cap:
        if abs(dh - rho) <= 1e-12 * rho or hi - lo <= 1e-15 * hi:
            break
        mid = 0.5 * (lo + hi)
        dm, wm, lamm, it = D(mid)
        lam_iters += it
        a_iters += 1
        if dm > rho:
            lo = mid
        else:
            hi, dh, wh, lamh = mid, dm, wm, lamm
        if hi - lo <= eps * hi and abs(dh - rho) <= 1e-9 * rho:
            break
    if div.kind == "chi2":
        a = _chi2_alpha_polish(z, rho, hi, eps)
        if a is not None:
            da, wa, lama, it = D(a)
            lam_iters += it
            if da <= rho * (1 + 1e-12):
                hi, dh, wh, lamh = a, da, wa, lama
    P = wh / N
    P = P / P.sum()
    return RobustSolution(P, hi, lamh, float(P @ z), case=2,
                          lambda_iterations=lam_iters, alpha_iterations=a_iters)


def robust_value(z, rho: float, divergence="chi2", eps: float = 1e-8) -> float:
    return maximize_robust_loss(z, RobustBall(get_divergence(divergence), rho, eps)).value
