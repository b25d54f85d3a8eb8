"""Convergence study of regularized solutions towards the limit solution.

For every n the regularized problem is solved with the per-atom formula on
one shared flow table; the limit solution reuses the same table, so the
measured error contains no flow-integration mismatch between the two.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ArgumentError, DomainError
from .flow import VelocityField, integrate
from .limit import solve_limit
from .measures import (AtomicMeasure, DensitySpec, density_from_json, density_to_atoms,
                       dual_bl_norm, measure_from_json)
from .regularized import AbsorptionParams, Regularizer, solve_closed_form, time_grid

__all__ = ["StudyConfig", "RateReport", "convergence_study", "density_to_atoms",
           "write_rate_csv", "fit_slope"]

DEFAULT_ATOMS = 1000


@dataclass(frozen=True)
class StudyConfig:
    """Inputs of a convergence study; ``ns`` is deduplicated and sorted."""

    velocity: VelocityField
    a: float
    initial: object
    T: float
    dt: float
    ns: tuple
    eval_times: tuple = None
    output_path: str = "rate.csv"
    atoms: int = DEFAULT_ATOMS

    def __post_init__(self):
        if not isinstance(self.velocity, VelocityField):
            raise ArgumentError("velocity must be a VelocityField")
        if not isinstance(self.initial, (DensitySpec, AtomicMeasure)):
            raise ArgumentError("initial must be a DensitySpec or an AtomicMeasure")
        AbsorptionParams(self.a)
        grid = time_grid(self.T, self.dt)
        ns = sorted({Regularizer(n).n for n in self.ns})
        if not ns:
            raise ArgumentError("ns must not be empty")
        object.__setattr__(self, "ns", tuple(ns))
        times = (float(self.T),) if self.eval_times is None else tuple(float(t) for t in self.eval_times)
        for t in times:
            if not 0.0 <= t <= grid[-1] * (1 + 1e-12):
                raise DomainError(f"evaluation time {t} outside [0, T]")
            if np.min(np.abs(grid - t)) > 1e-9 * max(1.0, grid[-1]):
                raise ArgumentError(f"evaluation time {t} is not a grid node")
        object.__setattr__(self, "eval_times", times)

    @property
    def is_absolutely_continuous(self):
        return isinstance(self.initial, DensitySpec)

    def initial_measure(self):
        if isinstance(self.initial, DensitySpec):
            return density_to_atoms(self.initial, self.atoms)
        return self.initial

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(velocity=VelocityField.from_json(obj["velocity"]),
                       a=float(obj["a"]),
                       initial=_initial_from_json(obj["initial"]),
                       T=float(obj["T"]), dt=float(obj["dt"]),
                       ns=tuple(int(n) for n in obj["ns"]),
                       eval_times=obj.get("eval_times"),
                       output_path=obj.get("output_path", "rate.csv"),
                       atoms=int(obj.get("K", DEFAULT_ATOMS)))
        except KeyError as exc:
            raise ArgumentError(f"study config is missing key {exc}") from None

    def to_json(self):
        return {"velocity": self.velocity.to_json(), "a": self.a,
                "initial": self.initial.to_json(), "T": self.T, "dt": self.dt,
                "ns": list(self.ns), "eval_times": list(self.eval_times),
                "output_path": self.output_path, "K": self.atoms}


def _initial_from_json(obj):
    if "density" in obj:
        return density_from_json(obj)
    return measure_from_json(obj)


def fit_slope(ns, errors):
    """Least-squares slope of log(error) against log(n); nan if any error is not positive."""
    errors = np.asarray(errors, dtype=float)
    if errors.size < 2 or np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        return math.nan
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(errors), 1)[0])


@dataclass(frozen=True)
class RateReport:
    """Errors per (t, n), fitted slopes per t, and gaps between consecutive n.

    Array rows follow ``eval_times``; columns follow ``ns`` (``cauchy_gap``
    column k compares ns[k] with ns[k + 1]).
    """

    ns: tuple
    eval_times: tuple
    errors: np.ndarray
    mass_errors: np.ndarray
    cauchy_gap: np.ndarray
    slopes: np.ndarray
    rate_asserted: bool = True
    info: dict = field(default_factory=dict, compare=False)

    def error(self, n, t):
        return float(self.errors[self._row(t), self.ns.index(n)])

    def slope_at(self, t):
        return float(self.slopes[self._row(t)])

    def _row(self, t):
        diffs = np.abs(np.asarray(self.eval_times) - t)
        j = int(np.argmin(diffs))
        if diffs[j] > 1e-9:
            raise ArgumentError(f"t={t} is not an evaluation time")
        return j

    def rows(self):
        for j, t in enumerate(self.eval_times):
            for k, n in enumerate(self.ns):
                yield t, n, float(self.errors[j, k]), float(self.mass_errors[j, k]), float(self.slopes[j])

    def summary(self):
        return {"ns": list(self.ns), "eval_times": list(self.eval_times),
                "slopes": [None if math.isnan(s) else s for s in self.slopes.tolist()],
                "rate_asserted": self.rate_asserted,
                "cauchy_gap": self.cauchy_gap.tolist()}


def convergence_study(cfg):
    """Run the regularized solvers for every n in ``cfg.ns`` against the limit."""
    mu0 = cfg.initial_measure()
    rate = AbsorptionParams(cfg.a)
    times = time_grid(cfg.T, cfg.dt)
    table = integrate(cfg.velocity, mu0.positions, times, keep_steps=True)
    limit = solve_limit(cfg.velocity, rate, mu0, cfg.T, cfg.dt, table=table)
    nodes = [int(np.argmin(np.abs(times - t))) for t in cfg.eval_times]

    regs = {n: solve_closed_form(cfg.velocity, Regularizer(n), rate, mu0, cfg.T, cfg.dt, table=table)
            for n in cfg.ns}
    shape = (len(nodes), len(cfg.ns))
    errors, mass_errors = np.zeros(shape), np.zeros(shape)
    gaps = np.zeros((len(nodes), max(0, len(cfg.ns) - 1)))
    for j, node in enumerate(nodes):
        ref = limit.trajectory[node]
        for k, n in enumerate(cfg.ns):
            approx = regs[n].measures[node]
            errors[j, k] = dual_bl_norm(approx - ref)
            mass_errors[j, k] = abs(ref.total_mass - approx.total_mass)
        for k in range(len(cfg.ns) - 1):
            gaps[j, k] = dual_bl_norm(regs[cfg.ns[k]].measures[node] - regs[cfg.ns[k + 1]].measures[node])
    slopes = np.array([fit_slope(cfg.ns, row) for row in errors])
    return RateReport(ns=cfg.ns, eval_times=cfg.eval_times, errors=errors,
                      mass_errors=mass_errors, cauchy_gap=gaps, slopes=slopes,
                      rate_asserted=cfg.is_absolutely_continuous,
                      info={"atoms": len(mu0), "limit": limit, "regularized": regs})


def write_rate_csv(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "n", "error_dualbl", "error_mass", "slope_at_t"])
        for t, n, err, merr, slope in report.rows():
            writer.writerow([repr(t), n, repr(err), repr(merr), repr(slope)])
