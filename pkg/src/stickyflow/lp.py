"""Dense tableau simplex for small linear programs.

Only the form needed by the flat-norm computation is supported::

    maximize    c @ x
    subject to  A @ x <= b,  x >= 0,  with b >= 0

so the origin is feasible and a single phase suffices.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import LPError

_PIVOT_EPS = 1e-12
# consecutive degenerate pivots tolerated under Dantzig's rule before
# switching to Bland's rule, which cannot cycle
_DEGENERATE_STREAK = 50


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    value: float
    duals: np.ndarray
    iterations: int


def simplex_max(c, A, b, max_iter=None, certify_tol=1e-9):
    """Solve ``max c.x s.t. A x <= b, x >= 0`` for ``b >= 0``.

    The returned optimum is certified: primal feasibility, dual
    feasibility and a vanishing duality gap are re-checked on the original
    data, and :class:`LPError` is raised if any of them fails.
    """
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")
    if np.any(b < 0):
        raise ValueError("simplex_max requires b >= 0 (origin feasible)")
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[m, :n] = -c
    basis = np.arange(n, n + m)

    scale = max(1.0, np.abs(A).max(initial=0.0), np.abs(c).max(initial=0.0))
    eps = _PIVOT_EPS * scale
    streak = 0
    for it in range(max_iter):
        obj = tab[m, :-1]
        if streak < _DEGENERATE_STREAK:
            col = int(np.argmin(obj))
            if obj[col] >= -eps:
                break
        else:
            neg = np.flatnonzero(obj < -eps)
            if neg.size == 0:
                break
            col = int(neg[0])

        column = tab[:m, col]
        rows = np.flatnonzero(column > eps)
        if rows.size == 0:
            raise LPError("LP is unbounded")
        ratios = tab[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + eps * max(1.0, abs(best))]
        row = int(ties[np.argmin(basis[ties])])

        streak = streak + 1 if best <= eps else 0
        tab[row] /= tab[row, col]
        others = np.arange(m + 1) != row
        tab[others] -= np.outer(tab[others, col], tab[row])
        basis[row] = col
    else:
        raise LPError(f"simplex did not converge in {max_iter} iterations")

    # the tableau accumulates roundoff from every pivot; recover the basic
    # solution and the duals from the original data of the final basis
    full = np.hstack((A, np.eye(m)))
    cost = np.concatenate((c, np.zeros(m)))
    B = full[:, basis]
    try:
        xb = np.linalg.solve(B, b)
        duals = np.linalg.solve(B.T, cost[basis])
    except np.linalg.LinAlgError:
        xb, duals = tab[:m, -1], tab[m, n:n + m].copy()
    x = np.zeros(n + m)
    x[basis] = xb
    x = x[:n]
    value = float(c @ x)

    tol = certify_tol * max(1.0, np.abs(b).max(initial=0.0)) * scale
    primal_ok = np.all(x >= -tol) and np.all(A @ x <= b + tol)
    dual_ok = np.all(duals >= -tol) and np.all(A.T @ duals >= c - tol)
    gap = abs(float(c @ x) - float(b @ duals))
    if not (primal_ok and dual_ok and gap <= tol):
        raise LPError(f"optimality certificate failed (duality gap {gap:.3e})")
    return LPResult(x=x, value=value, duals=duals, iterations=it)
