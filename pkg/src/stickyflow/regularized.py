"""Boundary-layer regularization of the sticky absorbing boundary.

Absorption that acts only at the point 1 is replaced by absorption with
spatial profile f, typically the ramp f_n supported on [1 - 1/n, 1]. Two
solvers are provided: Picard iteration of the variation-of-constants
equation, and the exact per-atom formula in which each atom keeps its
identity and decays with rate a * f along its trajectory.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ArgumentError, DomainError, IterationLimitError
from .flow import integrate
from .measures import AtomicMeasure, BLFunction, dual_bl_norm
from .quadrature import adaptive_simpson

QUAD_TOL = 1e-10


class Regularizer(BLFunction):
    """The ramp f_n(x) = max(0, 1 - n (1 - x)) as a piecewise-linear function."""

    def __init__(self, n):
        if isinstance(n, bool) or int(n) != n or n < 1:
            raise ArgumentError(f"n must be a positive integer, got {n!r}")
        n = int(n)
        object.__setattr__(self, "n", n)
        if n == 1:
            super().__init__((0.0, 1.0), (0.0, 1.0))
        else:
            super().__init__((0.0, 1.0 - 1.0 / n, 1.0), (0.0, 0.0, 1.0))

    def __call__(self, x):
        return np.maximum(0.0, 1.0 - self.n * (1.0 - np.asarray(x, dtype=float)))

    @property
    def layer_start(self):
        return 1.0 - 1.0 / self.n

    @property
    def lipschitz_constant(self):
        return float(self.n)

    @property
    def bl_norm(self):
        return 1.0 + self.n

    def __repr__(self):
        return f"Regularizer(n={self.n})"

    def __eq__(self, other):
        return isinstance(other, Regularizer) and other.n == self.n

    def __hash__(self):
        return hash(("Regularizer", self.n))


@dataclass(frozen=True)
class AbsorptionParams:
    """Absorption rate a > 0 at the boundary."""

    rate: float

    def __post_init__(self):
        rate = float(self.rate)
        if not (math.isfinite(rate) and rate > 0):
            raise DomainError(f"absorption rate must be positive and finite, got {self.rate!r}")
        object.__setattr__(self, "rate", rate)

    @classmethod
    def degenerate(cls, rate=0.0):
        """Bypass the positivity check. Meant for tests of limiting cases."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "rate", float(rate))
        return obj


def _rate(a):
    return a.rate if isinstance(a, AbsorptionParams) else AbsorptionParams(a).rate


def time_grid(T, dt):
    """Uniform grid 0 = t_0 < ... < t_K = T; dt must divide T."""
    T, dt = float(T), float(dt)
    if not (math.isfinite(T) and T >= 0):
        raise ArgumentError("T must be nonnegative and finite")
    if not (math.isfinite(dt) and dt > 0):
        raise ArgumentError("dt must be positive")
    K = round(T / dt)
    if abs(K * dt - T) > 1e-9 * max(T, dt):
        raise ArgumentError(f"dt={dt} does not divide T={T}")
    return np.linspace(0.0, T, K + 1)


@dataclass(frozen=True)
class MeasureTrajectory:
    """One AtomicMeasure per node of a uniform time grid."""

    times: np.ndarray
    measures: tuple
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size != len(self.measures) or times.size == 0:
            raise ArgumentError("one measure per time node is required")
        if times.size > 2:
            steps = np.diff(times)
            if np.any(np.abs(steps - steps[0]) > 1e-9 * max(1.0, times[-1])):
                raise ArgumentError("time grid must be uniform")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "measures", tuple(self.measures))

    def __len__(self):
        return self.times.size

    def __getitem__(self, j):
        return self.measures[j]

    @property
    def terminal(self):
        return self.measures[-1]

    def node_index(self, t):
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, self.times[-1]):
            raise ArgumentError(f"t={t} is not a grid node")
        return j

    def at(self, t):
        return self.measures[self.node_index(t)]

    def total_mass(self):
        return np.array([m.total_mass for m in self.measures])

    def rows(self):
        """(t, atom_index, x, w) for every atom of every node."""
        for t, m in zip(self.times, self.measures):
            for i, (x, w) in enumerate(m.atoms):
                yield float(t), i, x, w

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "atom_index", "x", "w"])
            for row in self.rows():
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _check_positive(mu0):
    if not isinstance(mu0, AtomicMeasure):
        raise ArgumentError("initial data must be an AtomicMeasure")
    if not mu0.is_positive:
        raise DomainError("initial measure must be positive")


def _trajectory(times, positions, weights, **info):
    return MeasureTrajectory(times, [AtomicMeasure(p, w) for p, w in zip(positions, weights)], info)


def free_transport(v, mu0, T, dt, table=None):
    """P_t mu0 on the grid: atoms carried by the flow, weights unchanged."""
    times = time_grid(T, dt)
    if table is None:
        table = integrate(v, mu0.positions, times)
    w = np.broadcast_to(mu0.weights, table.positions.shape)
    return _trajectory(times, table.positions, w)


def apply_absorption(f, a, m):
    """The absorption operator: weights w_i become -a f(x_i) w_i."""
    rate = _rate(a)
    return AtomicMeasure(m.positions, -rate * np.asarray(f(m.positions)) * m.weights)


def regularizer_gap(n, m):
    """Exact sup-norm distance between f_n and f_m for n <= m."""
    n_, m_ = Regularizer(n).n, Regularizer(m).n
    if m_ < n_:
        raise ArgumentError(f"need m >= n, got n={n}, m={m}")
    return 1.0 - n_ / m_


def sampled_regularizer_gap(n, m, resolution=10_000):
    """max |f_n - f_m| over a uniform grid joined with both sets of breakpoints.

    The maximum sits at the kink 1 - 1/m, which a uniform grid generally
    misses, hence the breakpoints.
    """
    fn, fm = Regularizer(n), Regularizer(m)
    xs = np.union1d(np.linspace(0.0, 1.0, int(resolution) + 1),
                    np.concatenate((fn.breakpoints, fm.breakpoints)))
    return float(np.max(np.abs(fn(xs) - fm(xs))))


def absorption_exponents(table, f, tol=QUAD_TOL):
    """E_i(t_j) = integral of f(Phi_s(x_i)) over [0, t_j] at every node.

    Each grid cell is cut at the times a trajectory crosses a breakpoint of
    f and at its hitting time, so f o Phi is smooth on every piece. Pieces
    after the hitting time contribute f(1) times their length; pieces where
    f vanishes at both ends lie inside a zero segment of f and contribute
    nothing; the rest go to adaptive Simpson with ``tol`` spread over [0, T]
    in proportion to piece length.
    """
    times = table.times
    K, na = times.size - 1, table.x0.size
    E = np.zeros((K + 1, na))
    if K == 0 or na == 0:
        return E
    T = times[-1]
    idx = np.arange(na)

    cuts = [table.hitting_times]
    for b in f.breakpoints:
        if 0.0 < b < 1.0:
            cuts.append(table.level_crossing_time(b, idx))
    cuts = np.stack(cuts, axis=1)
    inner = np.isfinite(cuts) & (cuts > 0) & (cuts < T)
    extra_owner = np.nonzero(inner)[0]

    owner = np.concatenate((np.repeat(idx, K + 1), extra_owner))
    points = np.concatenate((np.tile(times, na), cuts[inner]))
    order = np.lexsort((points, owner))
    owner, points = owner[order], points[order]
    same = owner[1:] == owner[:-1]
    lo, hi, own = points[:-1][same], points[1:][same], owner[:-1][same]
    keep = hi > lo
    lo, hi, own = lo[keep], hi[keep], own[keep]
    cell = np.clip(np.searchsorted(times, lo, side="right") - 1, 0, K - 1)

    value = np.zeros(lo.size)
    stuck = lo >= table.hitting_times[own]
    value[stuck] = float(f(1.0)) * (hi[stuck] - lo[stuck])
    rest = np.flatnonzero(~stuck)
    if rest.size:
        f_lo = f(table.position_at(lo[rest], own[rest]))
        f_hi = f(table.position_at(hi[rest], own[rest]))
        rest = rest[(f_lo != 0.0) | (f_hi != 0.0)]
    if rest.size:
        r_own = own[rest]
        value[rest] = adaptive_simpson(
            lambda s, i: f(table.position_at(s, r_own[i])),
            lo[rest], hi[rest], tol=tol * (hi[rest] - lo[rest]) / T)

    per_cell = np.zeros((K, na))
    np.add.at(per_cell, (cell, own), value)
    E[1:] = np.cumsum(per_cell, axis=0)
    return E


def solve_closed_form(v, f, a, mu0, T, dt, table=None):
    """Regularized solution from the per-atom formula.

    Atom i sits at Phi_t(x_i) with weight w_i exp(-a E_i(t)), E_i as in
    :func:`absorption_exponents`. ``table`` may pass a precomputed
    ``integrate(..., keep_steps=True)`` result for the atoms of ``mu0``.
    """
    _check_positive(mu0)
    rate = _rate(a)
    times = time_grid(T, dt)
    if table is None:
        table = integrate(v, mu0.positions, times, keep_steps=True)
    E = absorption_exponents(table, f)
    return _trajectory(times, table.positions, mu0.weights * np.exp(-rate * E), exponents=E)


def _cumulative_trapezoid(y, dt):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]), axis=0)
    return out


def solve_picard(v, f, a, mu0, T, dt, tol=1e-8, max_iter=100, table=None):
    """Regularized solution by Picard iteration of the mild formulation.

    Iterates u_{k+1}(t) = P_t mu0 + int_0^t P_{t-s} F u_k(s) ds from
    u_0(t) = P_t mu0. Every iterate is carried on the atoms of P_t mu0:
    by the semigroup law P_{t-s} moves mass sitting at Phi_s(x_i) to
    Phi_t(x_i), so an iterate is a per-atom coefficient c_k(t, i) and the
    time integral is a composite trapezoid rule on the grid. The residual
    is the largest flat-norm change over the grid nodes.
    """
    _check_positive(mu0)
    rate = a.rate if isinstance(a, AbsorptionParams) else _rate(a)
    times = time_grid(T, dt)
    if table is None:
        table = integrate(v, mu0.positions, times)
    X = table.positions
    w = mu0.weights
    fx = np.asarray(f(X), dtype=float)
    step = times[1] - times[0] if times.size > 1 else 0.0

    c = np.ones_like(X)
    residual = math.inf
    for k in range(1, int(max_iter) + 1):
        c_new = 1.0 - rate * _cumulative_trapezoid(fx * c, step)
        diff = (c_new - c) * w
        residual = max((dual_bl_norm(AtomicMeasure(X[j], diff[j])) for j in range(times.size)),
                       default=0.0)
        c = c_new
        if residual < tol:
            return _trajectory(times, X, c * w, iterations=k, residual=residual)
    raise IterationLimitError(
        f"Picard iteration did not reach tol={tol} in {max_iter} iterations "
        f"(last residual {residual:.3e})", residual)
