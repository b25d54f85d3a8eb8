"""Monte Carlo particles: transport, sticking at 1, exponential gating.

Each particle draws its start from the normalized initial measure, follows
the flow deterministically, and is removed an Exp(a) time after it reaches
the boundary. Particle i consumes one Philox block (four 64-bit words) at
counter offset i, so its draws do not depend on N or on how the ensemble
is split into chunks.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ArgumentError, DomainError
from .flow import integrate
from .measures import AtomicMeasure, DensitySpec, density_to_atoms
from .regularized import _rate

_WORDS_PER_PARTICLE = 4
_ANALYTIC_ATOMS = 1000


def particle_uniforms(seed, start, count):
    """Uniforms in [0, 1) for particles start .. start+count-1, shape (count, 4)."""
    bg = np.random.Philox(key=int(seed) & (2**64 - 1))
    bg.advance(int(start))
    raw = bg.random_raw(_WORDS_PER_PARTICLE * int(count)).reshape(-1, _WORDS_PER_PARTICLE)
    return (raw >> np.uint64(11)).astype(float) * 2.0**-53


def _normalized_init(init):
    if isinstance(init, DensitySpec):
        if not (init.total_mass > 0 and sum(init.values) > 0):
            raise ArgumentError("initial density cannot be normalized")
        return init
    if isinstance(init, AtomicMeasure):
        if not init.is_positive or len(init) == 0:
            raise ArgumentError("initial measure must be positive and nonzero")
        total = init.total_mass
        if not (math.isfinite(total) and total > 0):
            raise ArgumentError("initial measure cannot be normalized")
        return AtomicMeasure(init.positions, init.weights / total)
    raise ArgumentError("init must be a DensitySpec or an AtomicMeasure")


def _sample_positions(init, u):
    if isinstance(init, DensitySpec):
        masses = np.asarray(init.values, dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(masses))) / masses.sum()
        k = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, init.cell_count - 1)
        width = masses[k] / masses.sum()
        frac = np.where(width > 0, (u - cum[k]) / np.where(width > 0, width, 1.0), 0.5)
        return np.clip((k + np.clip(frac, 0.0, 1.0)) / init.cell_count, 0.0, 1.0)
    cum = np.cumsum(init.weights)
    cum /= cum[-1]
    k = np.minimum(np.searchsorted(cum, u, side="right"), len(init) - 1)
    return init.positions[k]


def _first_moment(init):
    if isinstance(init, DensitySpec):
        masses = np.asarray(init.values, dtype=float)
        mids = (np.arange(init.cell_count) + 0.5) / init.cell_count
        return float(masses @ mids / masses.sum())
    return float(init.weights @ init.positions / init.weights.sum())


@dataclass(frozen=True)
class ParticleEnsemble:
    """Particle states; alive at t iff t < gate_time."""

    seed: int
    count: int
    positions: np.ndarray
    arrival_times: np.ndarray
    gate_times: np.ndarray

    def alive(self, t):
        return t < self.gate_times

    def on_boundary(self, t):
        return self.alive(t) & (self.arrival_times <= t)


def build_ensemble(v, a, init, N, seed, horizon, gating=True):
    """Sample N particles and compute arrival and gate times up to ``horizon``."""
    ens, _, _ = _ensemble_and_flow(v, a, init, N, seed, [float(horizon)], gating)
    return ens


def _ensemble_and_flow(v, a, init, N, seed, times, gating):
    rate = _rate(a)
    N = int(N)
    if N < 1:
        raise ArgumentError("N must be >= 1")
    init = _normalized_init(init)
    u = particle_uniforms(seed, 0, N)
    x0 = _sample_positions(init, u[:, 0])
    uniq, inverse = np.unique(x0, return_inverse=True)
    table = integrate(v, uniq, times)
    tau = table.hitting_times[inverse]
    if gating:
        gate = tau + (-np.log1p(-u[:, 1]) / rate)
    else:
        gate = np.full(N, np.inf)
    ens = ParticleEnsemble(seed=int(seed), count=N, positions=x0,
                           arrival_times=tau, gate_times=gate)
    return ens, table, inverse


@dataclass(frozen=True)
class EmpiricalReport:
    """Survivor statistics at the requested times, with the analytic survival law."""

    times: np.ndarray
    count: int
    seed: int
    rate: float
    velocity: dict
    init_moment: float
    init_is_density: bool
    survivor_count: np.ndarray
    boundary_count: np.ndarray
    interior_histogram: np.ndarray
    bin_edges: np.ndarray
    analytic_mass: np.ndarray

    @property
    def standard_error(self):
        p = self.analytic_mass
        return np.sqrt(np.clip(p * (1 - p), 0.0, None) / self.count) * self.count

    @property
    def z_scores(self):
        return _z_scores(self.survivor_count, self.count * self.analytic_mass,
                         self.standard_error)

    def to_json(self):
        return {"times": self.times.tolist(), "N": self.count, "seed": self.seed,
                "rate": self.rate, "velocity": self.velocity,
                "survivor_count": self.survivor_count.tolist(),
                "boundary_count": self.boundary_count.tolist(),
                "interior_histogram": self.interior_histogram.tolist(),
                "bin_edges": self.bin_edges.tolist(),
                "analytic_mass": self.analytic_mass.tolist(),
                "standard_error": self.standard_error.tolist(),
                "z": [None if not math.isfinite(z) else z for z in self.z_scores.tolist()]}


def _z_scores(observed, expected, se):
    diff = observed - expected
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), 0.0)
    return np.where((se == 0) & (diff != 0), np.inf, z)


def _check_times(times):
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0 or not np.all(np.isfinite(times)) or np.any(times < 0):
        raise DomainError("times must be finite and nonnegative")
    return times


def _analytic_survival(v, rate, init, times):
    atoms = density_to_atoms(init, _ANALYTIC_ATOMS) if isinstance(init, DensitySpec) else init
    w = atoms.weights / atoms.weights.sum()
    tau = integrate(v, atoms.positions, [float(times.max())]).hitting_times
    return np.array([math.fsum(w * np.exp(-rate * np.maximum(0.0, t - tau))) for t in times])


def simulate(v, a, init, N, seed, times, bins=10, gating=True):
    """Empirical survivor, boundary and interior statistics of N particles."""
    rate = _rate(a)
    times = _check_times(times)
    init = _normalized_init(init)
    order = np.argsort(times, kind="stable")
    ens, table, inverse = _ensemble_and_flow(v, rate, init, N, seed, times[order], gating)
    pos_sorted = table.positions
    edges = np.linspace(0.0, 1.0, int(bins) + 1)
    survivors = np.empty(times.size, dtype=np.int64)
    boundary = np.empty(times.size, dtype=np.int64)
    hist = np.empty((times.size, int(bins)), dtype=np.int64)
    for row, j in enumerate(order):
        t = times[j]
        alive = ens.alive(t)
        at_one = ens.on_boundary(t)
        survivors[j] = int(alive.sum())
        boundary[j] = int(at_one.sum())
        x = pos_sorted[row][inverse][alive & ~at_one]
        hist[j] = np.histogram(x, bins=edges)[0]

    return EmpiricalReport(times=times, count=ens.count, seed=ens.seed, rate=rate,
                           velocity=v.to_json(), init_moment=_first_moment(init),
                           init_is_density=isinstance(init, DensitySpec),
                           survivor_count=survivors, boundary_count=boundary,
                           interior_histogram=hist, bin_edges=edges,
                           analytic_mass=_analytic_survival(v, rate, init, times))


@dataclass(frozen=True)
class Verdict:
    times: np.ndarray
    expected: np.ndarray
    z_scores: np.ndarray
    threshold: float = 3.0

    @property
    def passed(self):
        return bool(np.all(np.abs(self.z_scores) <= self.threshold))

    def to_json(self):
        return {"passed": self.passed, "threshold": self.threshold,
                "times": self.times.tolist(), "expected": self.expected.tolist(),
                "z": [None if not math.isfinite(z) else z for z in self.z_scores.tolist()]}


def compare_to_analytic(report, sol, threshold=3.0):
    """z-scores of survivor counts against N times the limit solution's survival.

    The configuration check covers the velocity, the time range and the
    normalized initial data. The rate is deliberately not compared: a wrong
    rate must show up as a failed verdict, not as an error.
    """
    if sol.velocity is not None and sol.velocity.to_json() != report.velocity:
        raise ArgumentError("velocity differs between report and solution")
    if report.times.max() > sol.horizon * (1 + 1e-12):
        raise ArgumentError("report times extend beyond the solution horizon")
    mu0 = sol.mu0
    if mu0.total_mass <= 0:
        raise ArgumentError("solution has no initial mass")
    moment = float(mu0.weights @ mu0.positions / mu0.total_mass)
    tol = 1e-4 if report.init_is_density else 1e-9
    if abs(moment - report.init_moment) > tol:
        raise ArgumentError("initial data differs between report and solution")

    p = np.array([sol.total_mass_at(t) for t in report.times]) / mu0.total_mass
    se = np.sqrt(np.clip(p * (1 - p), 0.0, None) / report.count) * report.count
    z = _z_scores(report.survivor_count, report.count * p, se)
    return Verdict(times=report.times.copy(), expected=report.count * p, z_scores=z,
                   threshold=threshold)
