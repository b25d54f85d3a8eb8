"""Independent reference computations used by the tests.

Nothing here calls the package's LP or quadrature code.
"""

import itertools
import math

import numpy as np


def _chain_candidates(d, i, M, L):
    """Values y_i can take at a vertex: +-M at some anchor atom k plus a signed
    sum of L * d along the chain from k to i. Shape (count, len(M))."""
    n = d.size + 1
    out = []
    for k in range(n):
        lo, hi = min(i, k), max(i, k)
        edges = d[lo:hi]
        for s in (1.0, -1.0):
            for signs in itertools.product((1.0, -1.0), repeat=edges.size):
                out.append(s * M + L * float(np.dot(signs, edges)) if edges.size else s * M)
    return np.unique(np.array(out), axis=0)


def flat_norm_grid_lower_bound(x, w, step=1e-3):
    """Candidate search for the flat norm of at most three atoms.

    For each M on a grid (L = 1 - M) every vertex candidate y is formed and
    checked against |y_i| <= M and |y_{i+1} - y_i| <= L d_i; the best
    feasible objective is a lower bound for the true optimum.
    """
    x, w = np.asarray(x, float), np.asarray(w, float)
    n = x.size
    M = np.arange(0.0, 1.0 + step / 2, step)
    M = M[M <= 1.0]
    L = 1.0 - M
    d = np.diff(x)
    cands = [_chain_candidates(d, i, M, L) for i in range(n)]
    grids = np.meshgrid(*[np.arange(c.shape[0]) for c in cands], indexing="ij")
    idx = [g.reshape(-1) for g in grids]
    ys = [cands[i][idx[i]] for i in range(n)]  # each (combos, len(M))
    eps = 1e-12
    ok = np.ones_like(ys[0], dtype=bool)
    for i in range(n):
        ok &= np.abs(ys[i]) <= M + eps
    for i in range(n - 1):
        ok &= np.abs(ys[i + 1] - ys[i]) <= L * d[i] + eps
    value = sum(w[i] * ys[i] for i in range(n))
    value = np.where(ok, value, -np.inf)
    return float(value.max())


def flat_norm_linprog(x, w):
    """The same LP solved by scipy's HiGHS."""
    from scipy.optimize import linprog

    x, w = np.asarray(x, float), np.asarray(w, float)
    n = x.size
    # variables y_1..y_n, M, L ; minimize -w.y
    c = np.concatenate((-w, [0.0, 0.0]))
    A, b = [], []
    for i in range(n):
        for s in (1.0, -1.0):
            r = np.zeros(n + 2)
            r[i], r[n] = s, -1.0
            A.append(r)
            b.append(0.0)
    for i in range(n - 1):
        for s in (1.0, -1.0):
            r = np.zeros(n + 2)
            r[i + 1], r[i], r[n + 1] = s, -s, -(x[i + 1] - x[i])
            A.append(r)
            b.append(0.0)
    r = np.zeros(n + 2)
    r[n] = r[n + 1] = 1.0
    A.append(r)
    b.append(1.0)
    bounds = [(None, None)] * n + [(0, None), (0, None)]
    res = linprog(c, A_ub=np.array(A), b_ub=np.array(b), bounds=bounds, method="highs")
    assert res.status == 0
    return -res.fun


def two_atom_flat_norm(d):
    """Unit opposite atoms at distance d."""
    return 2.0 * d / (d + 2.0)


# constant speed c: Phi_t(x) = min(x + c t, 1), tau(x) = (1 - x) / c
def const_flow(x, t, c=1.0):
    return np.minimum(np.asarray(x, float) + c * t, 1.0)


def const_tau(x, c=1.0):
    return (1.0 - np.asarray(x, float)) / c


# v(x) = 1 + x: Phi_t(x) = (1 + x) e^t - 1 until it reaches 1
def affine_flow(x, t):
    return np.minimum((1.0 + np.asarray(x, float)) * np.exp(t) - 1.0, 1.0)


def affine_tau(x):
    return np.log(2.0 / (1.0 + np.asarray(x, float)))


def ramp(n, x):
    return max(0.0, 1.0 - n * (1.0 - x))


def exponent_by_quad(flow, tau, n, x, t):
    """int_0^t f_n(Phi_s(x)) ds with the analytic flow and scipy's quad."""
    from scipy.integrate import quad

    tx = float(tau(x))
    inside = min(tx, t)
    total = 0.0
    if inside > 0:
        # f_n o Phi has a kink where the layer is entered; give quad the point
        pts = [s for s in np.linspace(0, inside, 2001)[1:-1]
               if abs(float(flow(x, s)) - (1 - 1 / n)) < 1e-3]
        total += quad(lambda s: ramp(n, float(flow(x, s))), 0.0, inside,
                      points=pts[:50] or None, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    if t > tx:
        total += t - tx
    return total


def limit_weight(w, tau, t, a):
    return w * math.exp(-a * max(0.0, t - tau))
