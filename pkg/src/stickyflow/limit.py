"""The limit problem: transport with mass absorbed at rate a once it sticks at 1.

An atom started at x moves along the flow and keeps its weight until it
reaches the boundary at time tau(x); from then on it decays like
exp(-a (t - tau(x))). The absorbed mass follows from the same formula, so
no time stepping of the measure is involved.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ArgumentError, DomainError
from .flow import integrate
from .measures import AtomicMeasure, dual_bl_norm
from .regularized import (AbsorptionParams, MeasureTrajectory, _check_positive, _rate,
                          free_transport, time_grid)


@dataclass(frozen=True)
class LimitSolution:
    """Limit solution on a grid with boundary and absorbed mass per node.

    ``hitting_times`` are per atom of ``mu0`` (+inf when the boundary is not
    reached by the last node), which lets :meth:`total_mass_at` evaluate the
    surviving mass at any t in [0, T].
    """

    trajectory: MeasureTrajectory
    boundary_mass: np.ndarray
    absorbed_mass: np.ndarray
    transported: MeasureTrajectory
    mu0: AtomicMeasure
    hitting_times: np.ndarray
    rate: float
    velocity: object = None

    @property
    def times(self):
        return self.trajectory.times

    @property
    def horizon(self):
        return float(self.times[-1])

    def total_mass_at(self, t):
        t = float(t)
        if not 0.0 <= t <= self.horizon * (1 + 1e-12):
            raise ArgumentError(f"t={t} outside [0, {self.horizon}]")
        decay = self.rate * np.maximum(0.0, t - self.hitting_times)
        return math.fsum(self.mu0.weights * np.exp(-decay))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "atom_index", "x", "w", "boundary_mass", "absorbed_mass"])
            for j, (t, m) in enumerate(zip(self.times, self.trajectory.measures)):
                for i, (x, w) in enumerate(m.atoms):
                    writer.writerow([repr(float(t)), i, repr(x), repr(w),
                                     repr(float(self.boundary_mass[j])),
                                     repr(float(self.absorbed_mass[j]))])


def solve_limit(v, a, mu0, T, dt, table=None):
    """Exact limit solution on the uniform grid with step dt up to T."""
    _check_positive(mu0)
    rate = _rate(a)
    times = time_grid(T, dt)
    if table is None:
        table = integrate(v, mu0.positions, times)
    tau = table.hitting_times
    w = mu0.weights
    # exponent a (t - tau ^ t); exactly zero before arrival
    decay = rate * np.maximum(0.0, times[:, None] - tau[None, :])
    weights = w * np.exp(-decay)
    measures = [AtomicMeasure(p, q) for p, q in zip(table.positions, weights)]
    trajectory = MeasureTrajectory(times, measures)

    boundary = np.array([m.mass_at(1.0) for m in measures])
    initial = mu0.total_mass
    # initial mass minus e^{-at} <mu0, e^{a (tau ^ t)}>, with the two
    # exponentials combined per atom so that large a t cannot overflow
    absorbed = np.array([initial - math.fsum(row) for row in weights])
    absorbed = np.maximum(absorbed, 0.0)
    return LimitSolution(trajectory=trajectory, boundary_mass=boundary,
                         absorbed_mass=absorbed,
                         transported=free_transport(v, mu0, T, dt, table=table),
                         mu0=mu0, hitting_times=tau.copy(), rate=rate, velocity=v)


@dataclass(frozen=True)
class MassLossReport:
    times: np.ndarray
    closed_form: np.ndarray
    quadrature: np.ndarray

    @property
    def discrepancy(self):
        return np.abs(self.closed_form - self.quadrature)

    @property
    def max_discrepancy(self):
        return float(self.discrepancy.max(initial=0.0))


def boundary_mass_integral(sol):
    """Trapezoid rule for a * int_0^t mu_s({1}) ds at every node.

    The boundary mass jumps when an atom arrives, so the cell containing an
    arrival time is split there and only the part after arrival is
    integrated; every other cell uses the plain two-point rule.
    """
    times = sol.times
    if times.size < 2 or sol.mu0.positions.size == 0:
        return np.zeros(times.size)
    tau, w, a = sol.hitting_times, sol.mu0.weights, sol.rate
    on_boundary = times[:, None] >= tau[None, :]
    g = np.where(on_boundary, a * w * np.exp(-a * np.maximum(0.0, times[:, None] - tau)), 0.0)
    cells = 0.5 * np.diff(times)[:, None] * (g[:-1] + g[1:])
    arrival = ~on_boundary[:-1] & on_boundary[1:]
    j, i = np.nonzero(arrival)
    cells[j, i] = 0.5 * (times[j + 1] - tau[i]) * (a * w[i] + g[j + 1, i])
    out = np.zeros(times.size)
    out[1:] = np.cumsum(cells.sum(axis=1))
    return out


def mass_loss_check(sol):
    """Absorbed mass from the closed form against quadrature of a * mu_t({1})."""
    return MassLossReport(times=sol.times.copy(), closed_form=sol.absorbed_mass.copy(),
                          quadrature=boundary_mass_integral(sol))


def equation_residual(sol):
    """Flat norm of mu_t - P_t mu0 + absorbed(t) delta_1 at every node."""
    out = np.empty(sol.times.size)
    for j, (m, p) in enumerate(zip(sol.trajectory.measures, sol.transported.measures)):
        out[j] = dual_bl_norm(m - p + AtomicMeasure.dirac(1.0, sol.absorbed_mass[j]))
    return out


def continuous_dependence_bound(v, a, t, lip_tau):
    """C_t = a + exp(|v|_L t) + 1 + lip_tau."""
    rate = _rate(a)
    t, lip_tau = float(t), float(lip_tau)
    if not t >= 0:
        raise DomainError("t must be nonnegative")
    if not (math.isfinite(lip_tau) and lip_tau >= 0):
        raise ArgumentError("lip_tau must be a nonnegative finite bound")
    return rate + math.exp(v.lip_constant * t) + 1.0 + lip_tau


def estimate_lip_tau(v, t, samples=10_000, safety=1.1):
    """Lipschitz constant of x -> tau(x) ^ t by finite differences, times ``safety``."""
    t = float(t)
    if t == 0.0:
        return 0.0
    xs = np.linspace(0.0, 1.0, int(samples) + 1)
    interior = np.minimum(integrate(v, xs, [t]).hitting_times, t)
    return safety * float(np.max(np.abs(np.diff(interior)) / np.diff(xs)))

