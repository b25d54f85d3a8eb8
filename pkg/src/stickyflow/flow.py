"""Characteristic flow on [0, 1] with a sticky boundary at 1.

Trajectories of x' = v(x) are integrated with fixed-step RK4. When a step
carries a trajectory across 1, the crossing time is located by bisection
on the partial step and the position is pinned to exactly 1 from then on.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .exceptions import ArgumentError, DomainError

MAX_STEP = 1e-3
_BISECT_ITERS = 60
_KINDS = {"constant": 1, "affine": 2, "poly": None, "polynomial": None}


def _real_roots_in(poly, lo, hi, imag_tol=1e-7):
    if poly.degree() < 1:
        return np.empty(0)
    r = poly.roots()
    r = r[np.abs(r.imag) <= imag_tol].real
    return r[(r >= lo) & (r <= hi)]


def _max_abs_on_unit(poly):
    pts = np.concatenate(([0.0, 1.0], _real_roots_in(poly.deriv(), 0.0, 1.0)))
    return float(np.max(np.abs(poly(pts))))


@dataclass(frozen=True)
class VelocityField:
    """Polynomial velocity v(x) = sum_k coefficients[k] * x**k on [0, 1].

    ``lip_constant`` and ``sup_norm`` default to their exact values
    (critical-point evaluation). User-supplied values are accepted only if
    dense sampling confirms they are upper bounds. Construction rejects
    fields with v(0) <= 0 or v(1) <= 0.
    """

    kind: str
    coefficients: tuple
    lip_constant: float = None
    sup_norm: float = None
    zero_set_scan_resolution: int = 10_000
    boundary_zero: float = field(init=False, default=None)

    def __post_init__(self):
        kind = "poly" if self.kind == "polynomial" else self.kind
        if kind not in _KINDS:
            raise ArgumentError(f"unknown velocity kind {self.kind!r}")
        coeffs = tuple(float(c) for c in np.atleast_1d(self.coefficients))
        expected = _KINDS[kind]
        if not coeffs or (expected is not None and len(coeffs) != expected):
            raise ArgumentError(f"{kind} velocity needs {expected or 'some'} coefficients")
        if not all(math.isfinite(c) for c in coeffs):
            raise DomainError("velocity coefficients must be finite")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "coefficients", coeffs)

        poly = Polynomial(coeffs)
        if not (poly(0.0) > 0 and poly(1.0) > 0):
            raise DomainError("velocity must satisfy v(0) > 0 and v(1) > 0")

        sup = _max_abs_on_unit(poly)
        lip = _max_abs_on_unit(poly.deriv()) if poly.degree() >= 1 else 0.0
        xs = np.linspace(0.0, 1.0, self.zero_set_scan_resolution + 1)
        vs = poly(xs)
        sampled_sup = float(np.max(np.abs(vs)))
        sampled_lip = float(np.max(np.abs(np.diff(vs) / np.diff(xs))))
        # difference quotients carry rounding of order eps * sup / spacing
        slack = 8 * np.finfo(float).eps * max(1.0, sampled_sup) * self.zero_set_scan_resolution
        for name, given, exact, sampled in (("sup_norm", self.sup_norm, sup, sampled_sup),
                                            ("lip_constant", self.lip_constant, lip, sampled_lip)):
            if given is None:
                object.__setattr__(self, name, exact)
            elif float(given) < sampled * (1 - 1e-12) - slack:
                raise DomainError(f"{name}={given} is not an upper bound (sampled {sampled})")
            else:
                object.__setattr__(self, name, float(given))

        object.__setattr__(self, "boundary_zero", self._scan_zeros(poly, xs, vs))

    def _scan_zeros(self, poly, xs, vs):
        """Largest zero of v in [0, 1), or None when v has none there."""
        candidates = []
        sign_change = np.flatnonzero((vs[:-1] * vs[1:] <= 0))
        sign_change = sign_change[xs[sign_change] < 1.0]
        if sign_change.size:
            i = sign_change[-1]
            lo, hi = xs[i], xs[i + 1]
            flo = vs[i]
            if flo == 0.0:
                candidates.append(lo)
            else:
                # keep sign(v(lo)) == sign(flo) and v(hi) of the other sign or zero
                while True:
                    mid = 0.5 * (lo + hi)
                    if mid <= lo or mid >= hi:
                        break
                    fm = poly(mid)
                    if fm == 0.0 or (fm > 0) != (flo > 0):
                        hi = mid
                    else:
                        lo = mid
                candidates.append(hi)
        # tangential zeros do not change sign; take them from the polynomial roots
        scale = max(1.0, self.sup_norm)
        for r in _real_roots_in(poly, 0.0, 1.0):
            if r < 1.0 and abs(poly(r)) <= 1e-12 * scale:
                candidates.append(float(r))
        return max(candidates) if candidates else None

    def __call__(self, x):
        c = self.coefficients
        if len(c) == 1:
            return np.full_like(np.asarray(x, dtype=float), c[0])
        out = c[-1]
        for ck in c[-2::-1]:
            out = out * x + ck
        return out

    def reaches_boundary(self, x0):
        """True where the trajectory from x0 hits 1 in finite time."""
        x0 = np.asarray(x0, dtype=float)
        if self.boundary_zero is None:
            return np.ones_like(x0, dtype=bool)
        return x0 > self.boundary_zero

    @classmethod
    def constant(cls, c):
        return cls("constant", (c,))

    @classmethod
    def affine(cls, c0, c1):
        return cls("affine", (c0, c1))

    @classmethod
    def from_json(cls, obj):
        return cls(kind=obj["kind"], coefficients=tuple(obj["coeffs"]),
                   lip_constant=obj.get("lip"), sup_norm=obj.get("sup"))

    def to_json(self):
        return {"kind": self.kind, "coeffs": list(self.coefficients),
                "lip": self.lip_constant, "sup": self.sup_norm}


@dataclass(frozen=True)
class FlowResult:
    position: float
    hit_boundary: bool
    hitting_time: float
    interior_time: float

    def to_json(self):
        tau = self.hitting_time if math.isfinite(self.hitting_time) else None
        return {"position": self.position, "hit_boundary": self.hit_boundary,
                "hitting_time": tau, "interior_time": self.interior_time}


def rk4_step(v, x, h):
    k1 = v(x)
    k2 = v(x + 0.5 * h * k1)
    k3 = v(x + 0.5 * h * k2)
    k4 = v(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def bisect_level(v, x, h, level, increasing=True):
    """Fraction theta in (0, 1] with rk4_step(v, x, theta*h) == level.

    Assumes the full step reaches ``level`` and x has not.
    """
    x = np.asarray(x, dtype=float)
    lo = np.zeros_like(x)
    hi = np.ones_like(x)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        y = rk4_step(v, x, mid * h)
        reached = y >= level if increasing else y <= level
        hi = np.where(reached, mid, hi)
        lo = np.where(reached, lo, mid)
    return hi


def _step_size(v, max_step=MAX_STEP):
    return max_step / max(1.0, v.sup_norm)


def _check_x0(x0):
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)) or np.any((x0 < 0) | (x0 > 1)):
        raise DomainError("initial positions must lie in [0, 1]")
    return x0


@dataclass(frozen=True)
class FlowTable:
    """Positions of many trajectories on a set of time nodes.

    ``hitting_times`` holds tau(x0) where it does not exceed the last node
    and +inf otherwise. With ``keep_steps`` the RK4 substep states are kept,
    which allows :meth:`position_at` to evaluate the flow at any time by one
    partial RK4 step from the preceding substep.
    """

    velocity: VelocityField
    x0: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    hitting_times: np.ndarray
    step_times: np.ndarray = None
    step_positions: np.ndarray = None

    @property
    def horizon(self):
        return float(self.times[-1])

    def position_at(self, s, idx):
        """Phi_s(x0[idx]) for matching arrays ``s`` and ``idx``."""
        if self.step_times is None:
            raise ArgumentError("table was built without keep_steps=True")
        s = np.asarray(s, dtype=float)
        idx = np.asarray(idx)
        k = np.searchsorted(self.step_times, s, side="right") - 1
        k = np.clip(k, 0, self.step_times.size - 2)
        base = self.step_positions[k, idx]
        y = rk4_step(self.velocity, base, s - self.step_times[k])
        y = np.minimum(y, 1.0)
        return np.where((s >= self.hitting_times[idx]) | (base == 1.0), 1.0, y)

    def level_crossing_time(self, level, idx):
        """First time trajectory ``idx`` reaches ``level`` (inf if never)."""
        if self.step_times is None:
            raise ArgumentError("table was built without keep_steps=True")
        idx = np.asarray(idx)
        out = np.full(idx.shape, np.inf)
        if idx.size == 0:
            return out
        x0 = self.x0[idx]
        increasing = self.velocity(x0) > 0
        X = self.step_positions[:, idx]
        reached = np.where(increasing, X[1:] >= level, X[1:] <= level)
        any_reached = reached.any(axis=0) & (x0 != level)
        k = np.argmax(reached, axis=0)
        out[x0 == level] = 0.0
        sel = np.flatnonzero(any_reached)
        if sel.size:
            ks = k[sel]
            h = self.step_times[ks + 1] - self.step_times[ks]
            base = X[ks, sel]
            theta = np.where(increasing[sel],
                             bisect_level(self.velocity, base, h, level, True),
                             bisect_level(self.velocity, base, h, level, False))
            out[sel] = np.minimum(self.step_times[ks] + theta * h, self.step_times[ks + 1])
        return out


def integrate(v, x0, times, keep_steps=False, max_step=MAX_STEP):
    """Integrate trajectories from ``x0`` and record them at ``times``.

    Steps are at most ``max_step / max(1, sup|v|)`` and are aligned with
    the nodes, so every node is reached exactly.
    """
    x0 = _check_x0(np.atleast_1d(x0)).copy()
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0 or times[0] < 0 or np.any(np.diff(times) < 0):
        raise ArgumentError("times must be nonnegative and nondecreasing")
    h_target = _step_size(v, max_step)
    can_hit = v.reaches_boundary(x0)
    below_one = np.nextafter(1.0, 0.0)

    hit = x0 >= 1.0
    x = np.where(hit, 1.0, x0)
    tau = np.where(hit, 0.0, np.inf)
    positions = np.empty((times.size, x0.size))
    step_t, step_x = [0.0], [x.copy()]

    t = 0.0
    for j, node in enumerate(times):
        span = node - t
        if span > 0:
            nsub = max(1, math.ceil(span / h_target - 1e-9))
            h = span / nsub
            for k in range(nsub):
                t_next = node if k == nsub - 1 else t + h
                x_new = rk4_step(v, x, h)
                cross = ~hit & can_hit & (x_new >= 1.0)
                if cross.any():
                    theta = bisect_level(v, x[cross], h, 1.0)
                    tau[cross] = np.minimum(t + theta * h, t_next)
                    hit = hit | cross
                x = np.where(hit, 1.0, np.minimum(x_new, below_one))
                t = t_next
                if keep_steps:
                    step_t.append(t)
                    step_x.append(x.copy())
        positions[j] = x

    kw = {}
    if keep_steps:
        if len(step_t) == 1:
            step_t.append(0.0)
            step_x.append(x.copy())
        kw = {"step_times": np.asarray(step_t), "step_positions": np.asarray(step_x)}
    return FlowTable(velocity=v, x0=x0, times=times, positions=positions,
                     hitting_times=tau, **kw)


def hitting_time(v, x0):
    """First time the trajectory from x0 reaches 1; +inf if it never does."""
    x0 = float(_check_x0(x0))
    if x0 >= 1.0:
        return 0.0
    if not v.reaches_boundary(x0):
        return math.inf
    h = _step_size(v)
    x = np.array([x0])
    k = 0
    while True:
        x_new = rk4_step(v, x, h)
        if x_new[0] >= 1.0:
            theta = bisect_level(v, x, h, 1.0)[0]
            return float(min(k * h + theta * h, (k + 1) * h))
        x = x_new
        k += 1


def flow_map(v, x0, t):
    """Phi_t(x0) together with the hitting time and the interior time."""
    x0 = float(_check_x0(x0))
    t = float(t)
    if not t >= 0:
        raise DomainError("t must be nonnegative")
    tau = hitting_time(v, x0)
    if tau <= t:
        return FlowResult(1.0, True, tau, tau)
    if t == 0.0:
        return FlowResult(x0, False, tau, 0.0)
    # step min(MAX_STEP, t) / max(1, sup|v|), written without dividing by t
    nsub = max(1, math.ceil(max(1.0, v.sup_norm) * max(1.0, t / MAX_STEP) - 1e-9))
    h = t / nsub
    x = np.array([x0])
    for _ in range(nsub):
        x = rk4_step(v, x, h)
    pos = min(float(x[0]), float(np.nextafter(1.0, 0.0)))
    return FlowResult(pos, False, tau, t)


def interior_time(v, x0, t):
    """tau(x0) ^ t: the part of [0, t] spent away from the boundary."""
    if not float(t) >= 0:
        raise DomainError("t must be nonnegative")
    return min(hitting_time(v, x0), float(t))


@dataclass(frozen=True)
class LipschitzReport:
    t: float
    spatial_estimate: float
    spatial_bound: float
    temporal_estimate: float
    temporal_bound: float
    slack: float = 1e-6

    @property
    def spatial_ok(self):
        return self.spatial_estimate <= self.spatial_bound * (1 + self.slack)

    @property
    def temporal_ok(self):
        return self.temporal_estimate <= self.temporal_bound * (1 + self.slack)

    @property
    def passed(self):
        return self.spatial_ok and self.temporal_ok


def lipschitz_certificate(v, t, samples=1000, time_nodes=64, seed=0):
    """Sampled Lipschitz constants of x -> Phi_t(x) and s -> Phi_s(x).

    Spatial pairs are neighbouring grid points plus random pairs; temporal
    pairs are neighbouring nodes of a uniform grid on [0, t], which bounds
    every pair by the triangle inequality.
    """
    t = float(t)
    xs = np.linspace(0.0, 1.0, int(samples))
    end = integrate(v, xs, [t]).positions[0]
    ratios = np.abs(np.diff(end)) / np.diff(xs)
    rng = np.random.default_rng(seed)
    i, j = rng.integers(0, xs.size, size=(2, 4 * xs.size))
    ok = i != j
    ratios = np.concatenate((ratios, np.abs(end[i[ok]] - end[j[ok]]) / np.abs(xs[i[ok]] - xs[j[ok]])))
    spatial = float(ratios.max())

    temporal = 0.0
    if t > 0:
        nodes = np.linspace(0.0, t, int(time_nodes) + 1)
        pos = integrate(v, xs, nodes).positions
        temporal = float(np.max(np.abs(np.diff(pos, axis=0)) / np.diff(nodes)[:, None]))
    return LipschitzReport(t=t, spatial_estimate=spatial,
                           spatial_bound=math.exp(v.lip_constant * t),
                           temporal_estimate=temporal, temporal_bound=v.sup_norm)
