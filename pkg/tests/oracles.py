"""Independent reference solvers used by the tests.  None of them call into drrules' algorithms."""

import itertools

import numpy as np


# ------------------------------------------------------------------- robust loss
def robust_cvxpy(z, rho, kind):
    """Worst-case expected loss over the divergence ball by a conic solver."""
    import cvxpy as cp

    z = np.asarray(z, dtype=float)
    N = z.size
    P = cp.Variable(N, nonneg=True)
    if kind == "chi2":
        con = cp.sum_squares(N * P - 1) / N <= rho
    else:
        con = cp.sum(-cp.entr(N * P) - N * P + 1) / N <= rho
    prob = cp.Problem(cp.Maximize(z @ P), [cp.sum(P) == 1, con])
    prob.solve(solver="CLARABEL")
    return float(prob.value)


def _phi(s, kind):
    s = np.asarray(s, dtype=float)
    if kind == "chi2":
        return (s - 1) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s > 0, s * np.log(np.where(s > 0, s, 1)) - s + 1, 1.0)


def robust_grid(z, rho, kind, levels=6, n=41):
    """Zooming grid search over the simplex (N <= 3)."""
    z = np.asarray(z, dtype=float)
    N = z.size
    if N == 1:
        return float(z[0])
    lo = np.zeros(N - 1)
    hi = np.ones(N - 1)
    best, best_p = -np.inf, None
    for _ in range(levels):
        axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
        G = np.array(list(itertools.product(*axes)))
        G = G[G.sum(axis=1) <= 1 + 1e-12]
        P = np.column_stack([G, 1 - G.sum(axis=1)])
        P = np.clip(P, 0, None)
        D = np.mean(_phi(N * P, kind), axis=1)
        ok = D <= rho + 1e-12
        if ok.any():
            vals = P[ok] @ z
            k = int(np.argmax(vals))
            if vals[k] > best:
                best, best_p = float(vals[k]), P[ok][k]
        width = (hi - lo) / (n - 1) * 2
        lo = np.clip(best_p[:-1] - width, 0, 1)
        hi = np.clip(best_p[:-1] + width, 0, 1)
    return best


def _conj(u, kind):
    u = np.asarray(u, dtype=float)
    if kind == "chi2":
        return np.where(u >= -2, u + u * u / 4, -1.0)
    return np.expm1(np.minimum(u, 700))


def _dual_in_lambda(z, rho, kind, A, levels=22, n=13):
    """min over lam of the dual objective for each alpha in ``A`` (convex in lam: zoom is safe)."""
    lo = np.full(A.size, float(z.min()) - 10.0 - 10.0 * A)
    hi = np.full(A.size, float(z.max()) + 2.0 * A + 1.0)
    best = np.full(A.size, np.inf)
    for _ in range(levels):
        L = lo[:, None] + (hi - lo)[:, None] * np.linspace(0, 1, n)[None, :]
        u = (z[None, None, :] - L[..., None]) / A[:, None, None]
        val = L + A[:, None] * rho + A[:, None] * np.mean(_conj(u, kind), axis=-1)
        j = np.argmin(val, axis=1)
        best = np.minimum(best, val[np.arange(A.size), j])
        step = (hi - lo) / (n - 1)
        c = L[np.arange(A.size), j]
        lo, hi = c - 2 * step, c + 2 * step
    return best


def robust_dual_grid(z, rho, kind, levels=18, n=13):
    """Upper bound by nested zooming grids on the convex dual
    ``min_{alpha>0, lam} lam + alpha rho + alpha mean(phi*((z - lam)/alpha))``.

    The inner minimum in lam is convex and the outer one unimodal in log alpha, so each zoom
    keeps the minimizer.  Any evaluated point is a valid upper bound; alpha -> 0 gives max z.
    """
    z = np.asarray(z, dtype=float)
    best = float(z.max())
    a_lo, a_hi = -12.0, 6.0  # log10 alpha
    for _ in range(levels):
        E = np.linspace(a_lo, a_hi, n)
        g = _dual_in_lambda(z, rho, kind, 10.0 ** E)
        i = int(np.argmin(g))
        best = min(best, float(g[i]))
        step = (a_hi - a_lo) / (n - 1)
        a_lo, a_hi = E[i] - 2 * step, E[i] + 2 * step
    return best


def robust_bracket(z, rho, kind):
    """(primal grid lower bound, dual grid upper bound) for N <= 3."""
    return robust_grid(z, rho, kind), robust_dual_grid(z, rho, kind)


# ------------------------------------------------------------------- rule sets
def all_conjunctions(d, max_size, negations=True):
    lits = [(j, 1) for j in range(d)] + ([(j, 0) for j in range(d)] if negations else [])
    out = []
    for s in range(1, max_size + 1):
        for c in itertools.combinations(lits, s):
            if len({j for j, _ in c}) == s:
                out.append(tuple(sorted(c)))
    return out


def coverage(X, conj):
    X = np.asarray(X)
    out = np.ones(X.shape[0], dtype=bool)
    for j, v in conj:
        out &= X[:, j] == v
    return out


def master_objective(covs, y, P):
    """Positives pay if uncovered, negatives pay per covering rule."""
    y = np.asarray(y)
    if not covs:
        return float(P[y == 1].sum())
    C = np.column_stack(covs)
    n = C.sum(axis=1)
    return float(P[(y == 1) & (n == 0)].sum() + (P[y == 0] * n[y == 0]).sum())


def best_ruleset(X, y, P, budget=5, negations=True):
    """Exhaustive minimum of the master objective over rule sets with complexity <= budget."""
    d = X.shape[1]
    conj = all_conjunctions(d, budget - 1, negations)
    covs = [coverage(X, c) for c in conj]
    best = [master_objective([], y, P), ()]

    def rec(start, left, chosen):
        for i in range(start, len(conj)):
            cost = len(conj[i]) + 1
            if cost <= left:
                cur = chosen + [i]
                v = master_objective([covs[k] for k in cur], y, P)
                if v < best[0] - 1e-15:
                    best[0], best[1] = v, tuple(conj[k] for k in cur)
                rec(i + 1, left - cost, cur)

    rec(0, budget, [])
    return best[0], best[1]


# -------------------------------------------------------------- ensemble IP
def ensemble_ip_bruteforce(H, y, p, costs, C, delta):
    """min over member subsets S with cost <= C of the LP in the weights v (support in S)."""
    from scipy.optimize import linprog

    H = np.asarray(H, dtype=float)
    y = np.asarray(y)
    N, K = H.shape
    best = np.inf
    for r in range(1, K + 1):
        for S in itertools.combinations(range(K), r):
            if sum(costs[k] for k in S) > C + 1e-9:
                continue
            S = list(S)
            # variables: v_S (r), xi (N)
            c = np.concatenate([np.zeros(r), p])
            A, b = [], []
            for i in range(N):
                row = np.zeros(r + N)
                if y[i] == 0:
                    row[:r] = H[i, S]
                    row[r + i] = -1
                    b.append(0.5 - delta)
                else:
                    row[:r] = -H[i, S]
                    row[r + i] = -1
                    b.append(-(0.5 + delta))
                A.append(row)
            Aeq = [np.concatenate([np.ones(r), np.zeros(N)])]
            res = linprog(c, A_ub=np.array(A), b_ub=b, A_eq=np.array(Aeq), b_eq=[1.0],
                          bounds=[(0, 1)] * r + [(0, None)] * N, method="highs")
            if res.status == 0:
                best = min(best, float(res.fun))
    return best
