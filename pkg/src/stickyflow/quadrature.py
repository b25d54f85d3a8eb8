"""Adaptive Simpson quadrature over many intervals at once."""

import numpy as np


def adaptive_simpson(func, a, b, tol=1e-10, max_depth=50):
    """Integrate ``func`` over each interval [a[i], b[i]].

    ``func(s, i)`` must accept equal-shape arrays of abscissae and interval
    indices and return the integrand values. ``tol`` is an absolute error
    target per interval; it is halved on every bisection as in the
    classical recursive scheme, and accepted panels get the Richardson
    correction ``delta / 15``.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    result = np.zeros(a.size)
    if a.size == 0:
        return result
    owner = np.arange(a.size)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), a.shape).copy()
    m = 0.5 * (a + b)
    fa, fm, fb = func(a, owner), func(m, owner), func(b, owner)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    for depth in range(max_depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm = func(lm, owner)
        frm = func(rm, owner)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        done = np.abs(delta) <= 15.0 * tol
        if depth == max_depth - 1:
            done[:] = True
        np.add.at(result, owner[done], (left + right + delta / 15.0)[done])
        if done.all():
            break
        k = ~done
        a, m, b = a[k], m[k], b[k]
        fa, flm, fm, frm, fb = fa[k], flm[k], fm[k], frm[k], fb[k]
        left, right, tol, owner = left[k], right[k], tol[k], owner[k]
        # children: [a, m] with midpoint lm, and [m, b] with midpoint rm
        a, m, b = np.concatenate((a, m)), np.concatenate((0.5 * (a + m), 0.5 * (m + b))), np.concatenate((m, b))
        fa, fm, fb = np.concatenate((fa, fm)), np.concatenate((flm, frm)), np.concatenate((fm, fb))
        whole = np.concatenate((left, right))
        tol = np.concatenate((tol, tol)) / 2.0
        owner = np.concatenate((owner, owner))
    return result
