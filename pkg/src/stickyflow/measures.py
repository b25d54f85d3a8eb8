"""Finite signed atomic measures on [0, 1] and their norms.

Measures are stored as sorted arrays of atom positions and nonzero weights.
The flat (dual bounded-Lipschitz) norm is computed exactly by a small LP
over the values of the test function at the atoms.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ArgumentError, DomainError
from .lp import simplex_max

MERGE_TOL = 1e-12
ORDER_TOL = 1e-12


def _as_float_array(values, name):
    arr = np.asarray(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _check_unit_interval(x, tol=MERGE_TOL):
    if x.size and (x.min() < -tol or x.max() > 1.0 + tol):
        raise DomainError("atom positions must lie in [0, 1]")
    return np.clip(x, 0.0, 1.0)


class AtomicMeasure:
    """Immutable finite signed measure sum_i w_i * delta_{x_i} on [0, 1].

    Positions closer than ``MERGE_TOL`` are merged by adding weights; atoms
    whose weight becomes exactly zero are dropped. A merged group keeps its
    largest position, so an atom placed exactly at 1 stays exactly at 1.
    """

    __slots__ = ("positions", "weights")

    def __init__(self, positions=(), weights=()):
        x = _check_unit_interval(_as_float_array(positions, "positions"))
        w = _as_float_array(weights, "weights")
        if x.shape != w.shape:
            raise ArgumentError("positions and weights must have equal length")
        if x.size:
            order = np.argsort(x, kind="stable")
            x, w = x[order], w[order]
            starts = np.concatenate(([True], np.diff(x) > MERGE_TOL))
            if not starts.all():
                idx = np.flatnonzero(starts)
                w = np.add.reduceat(w, idx)
                x = np.maximum.reduceat(x, idx)
            keep = w != 0.0
            x, w = x[keep], w[keep]
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "weights", w)

    def __setattr__(self, name, value):
        raise AttributeError("AtomicMeasure is immutable")

    @classmethod
    def dirac(cls, x, weight=1.0):
        return cls([x], [weight])

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def from_atoms(cls, atoms):
        atoms = list(atoms)
        if not atoms:
            return cls()
        x, w = zip(*atoms)
        return cls(x, w)

    @property
    def atoms(self):
        return list(zip(self.positions.tolist(), self.weights.tolist()))

    def __len__(self):
        return self.positions.size

    def __repr__(self):
        inner = ", ".join(f"{w:g}@{x:g}" for x, w in self.atoms[:6])
        more = ", ..." if len(self) > 6 else ""
        return f"AtomicMeasure([{inner}{more}])"

    def __eq__(self, other):
        if not isinstance(other, AtomicMeasure):
            return NotImplemented
        return (np.array_equal(self.positions, other.positions)
                and np.array_equal(self.weights, other.weights))

    __hash__ = None

    @property
    def is_positive(self):
        return bool(np.all(self.weights > 0))

    @property
    def total_mass(self):
        """Signed total mass m([0, 1])."""
        return math.fsum(self.weights)

    def mass_at(self, x):
        """m({x}), matching positions exactly."""
        return math.fsum(self.weights[self.positions == x])

    def __add__(self, other):
        if not isinstance(other, AtomicMeasure):
            return NotImplemented
        return AtomicMeasure(np.concatenate((self.positions, other.positions)),
                             np.concatenate((self.weights, other.weights)))

    def __neg__(self):
        return AtomicMeasure(self.positions, -self.weights)

    def __sub__(self, other):
        if not isinstance(other, AtomicMeasure):
            return NotImplemented
        return self + (-other)

    def __mul__(self, c):
        c = float(c)
        if c == 0.0:
            return AtomicMeasure()
        return AtomicMeasure(self.positions, c * self.weights)

    __rmul__ = __mul__

    def to_json(self):
        return {"atoms": [{"x": x, "w": w} for x, w in self.atoms]}


@dataclass(frozen=True)
class BLFunction:
    """Piecewise-linear bounded Lipschitz function on [0, 1].

    Linear interpolation between ``breakpoints`` and constant beyond the
    outermost ones.
    """

    breakpoints: tuple
    node_values: tuple

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.node_values, dtype=float)
        if bp.ndim != 1 or bp.shape != vals.shape or bp.size == 0:
            raise ArgumentError("breakpoints and node_values must be equal-length 1-D")
        if np.any(np.diff(bp) <= 0):
            raise ArgumentError("breakpoints must be strictly increasing")
        if bp[0] < 0 or bp[-1] > 1 or not np.all(np.isfinite(vals)):
            raise DomainError("breakpoints must lie in [0, 1], values finite")
        object.__setattr__(self, "breakpoints", tuple(bp.tolist()))
        object.__setattr__(self, "node_values", tuple(vals.tolist()))

    def __call__(self, x):
        return np.interp(x, self.breakpoints, self.node_values)

    @property
    def sup_norm(self):
        return max(abs(v) for v in self.node_values)

    @property
    def lipschitz_constant(self):
        bp = np.asarray(self.breakpoints)
        if bp.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.node_values) / np.diff(bp))))

    @property
    def bl_norm(self):
        return self.sup_norm + self.lipschitz_constant


def tv_norm(m):
    """Total variation norm: the sum of absolute weights."""
    return math.fsum(np.abs(m.weights))


def _flat_norm_lp(x, w):
    # variables: p_i = y_i + M >= 0 (i < N), M, L;  y_i = phi(x_i)
    n = x.size
    d = np.diff(x)
    nvar = n + 2
    iM, iL = n, n + 1
    rows = []
    for i in range(n):                       # y_i <= M   <=>  p_i - 2M <= 0
        r = np.zeros(nvar)
        r[i], r[iM] = 1.0, -2.0
        rows.append(r)
    for i in range(n - 1):                   # |y_{i+1} - y_i| <= L d_i
        r = np.zeros(nvar)
        r[i + 1], r[i], r[iL] = 1.0, -1.0, -d[i]
        rows.append(r)
        r = np.zeros(nvar)
        r[i + 1], r[i], r[iL] = -1.0, 1.0, -d[i]
        rows.append(r)
    r = np.zeros(nvar)
    r[iM] = r[iL] = 1.0                      # M + L <= 1
    rows.append(r)
    A = np.array(rows)
    b = np.zeros(len(rows))
    b[-1] = 1.0
    c = np.concatenate((w, [-w.sum(), 0.0]))
    return simplex_max(c, A, b).value


def dual_bl_norm(m, method="auto"):
    """Dual bounded-Lipschitz (flat) norm of an atomic measure.

    The supremum over test functions with ``||phi||_inf + |phi|_L <= 1`` is
    solved as an LP in the values of phi at the atoms (an optimal phi is
    piecewise linear with kinks at the atoms). With ``method="auto"``
    sign-definite measures skip the LP, since then the norm is
    |m([0, 1])|; ``method="lp"`` always solves the LP.
    """
    if method not in ("auto", "lp"):
        raise ArgumentError(f"unknown method {method!r}")
    w = m.weights
    if w.size == 0:
        return 0.0
    if method == "auto" and (np.all(w >= 0) or np.all(w <= 0)):
        return abs(math.fsum(w))
    value = _flat_norm_lp(m.positions, w)
    return max(0.0, value)


def pair(m, phi):
    """<m, phi> = sum_i w_i phi(x_i) for a vectorized callable phi."""
    if len(m) == 0:
        return 0.0
    vals = np.asarray(phi(m.positions), dtype=float)
    return math.fsum(m.weights * vals)


def push_forward(m, fn):
    """Image measure of ``m`` under the map ``fn`` (weights unchanged)."""
    if len(m) == 0:
        return m
    y = _as_float_array(fn(m.positions), "mapped positions")
    if y.shape != m.positions.shape:
        raise ArgumentError("map must act elementwise on positions")
    return AtomicMeasure(_check_unit_interval(y), m.weights)


def leq(m1, m2, tol=ORDER_TOL):
    """Partial order m1 <= m2, i.e. m2 - m1 is a positive measure."""
    diff = m2 - m1
    return bool(np.all(diff.weights >= -tol))


@dataclass(frozen=True)
class DensitySpec:
    """Piecewise-constant density on a uniform partition of [0, 1].

    ``values`` are relative cell heights; the density is rescaled so that
    it integrates to ``mass``. When ``mass`` is None the raw heights are
    taken as given.
    """

    kind: str = "uniform"
    cell_count: int = 1
    values: tuple = ()
    mass: float = None

    def __post_init__(self):
        if self.kind not in ("uniform", "piecewise-constant"):
            raise ArgumentError(f"unknown density kind {self.kind!r}")
        if int(self.cell_count) < 1:
            raise ArgumentError("cell_count must be positive")
        object.__setattr__(self, "cell_count", int(self.cell_count))
        if self.kind == "uniform":
            vals = np.ones(self.cell_count)
        else:
            vals = np.asarray(self.values, dtype=float)
            if vals.shape != (self.cell_count,):
                raise ArgumentError("need one value per cell")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise DomainError("density values must be finite and nonnegative")
        object.__setattr__(self, "values", tuple(vals.tolist()))
        if self.mass is not None:
            if not math.isfinite(self.mass) or self.mass < 0:
                raise DomainError("mass must be finite and nonnegative")
            if self.mass > 0 and sum(vals) == 0:
                raise ArgumentError("density with zero values cannot carry mass")

    @property
    def total_mass(self):
        if self.mass is not None:
            return float(self.mass)
        if self.kind == "uniform":
            return 1.0
        return math.fsum(self.values) / self.cell_count

    def cell_masses(self):
        vals = np.asarray(self.values)
        s = vals.sum()
        if s == 0:
            return np.zeros_like(vals)
        return self.total_mass * vals / s

    def cdf(self, x):
        """Cumulative mass on [0, x]; exact for the piecewise-constant density."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        masses = self.cell_masses()
        cum = np.concatenate(([0.0], np.cumsum(masses)))
        u = x * self.cell_count
        k = np.minimum(np.floor(u).astype(int), self.cell_count - 1)
        return cum[k] + masses[k] * (u - k)

    def to_json(self):
        kind = "uniform" if self.kind == "uniform" else "cells"
        return {"density": {"kind": kind, "cells": self.cell_count,
                            "values": list(self.values), "mass": self.total_mass}}


def density_to_atoms(d, K):
    """Midpoint quadrature of a density: one atom per cell of width 1/K.

    Each atom carries the exact mass of its cell; the total mass is
    reproduced bit-exactly (``tv_norm`` of the result equals
    ``d.total_mass``).
    """
    K = int(K)
    if K < 1:
        raise ArgumentError("K must be >= 1")
    edges = np.linspace(0.0, 1.0, K + 1)
    w = np.diff(d.cdf(edges))
    w = np.maximum(w, 0.0)
    mids = 0.5 * (edges[:-1] + edges[1:])
    target = d.total_mass
    if target > 0:
        big = int(np.argmax(w))
        for _ in range(8):
            residual = target - math.fsum(w)
            if residual == 0.0:
                break
            w[big] += residual
    return AtomicMeasure(mids, w)


def measure_from_json(obj, K=1000):
    """Parse ``{"atoms": [...]}`` or ``{"density": {...}}`` (quadrature with K cells)."""
    if "atoms" in obj:
        atoms = obj["atoms"]
        xs = [float(a["x"]) for a in atoms]
        ws = [float(a["w"]) for a in atoms]
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ArgumentError("atoms must be listed with ascending x")
        return AtomicMeasure(xs, ws)
    if "density" in obj:
        return density_to_atoms(density_from_json(obj), K)
    raise ArgumentError("measure JSON needs an 'atoms' or 'density' key")


def density_from_json(obj):
    spec = obj["density"] if "density" in obj else obj
    kind = spec.get("kind", "uniform")
    kind = {"cells": "piecewise-constant"}.get(kind, kind)
    cells = int(spec.get("cells", len(spec.get("values", [])) or 1))
    values = spec.get("values", ())
    return DensitySpec(kind=kind, cell_count=cells, values=tuple(values),
                       mass=spec.get("mass"))
