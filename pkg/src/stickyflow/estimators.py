"""scikit-learn style wrappers around the solvers.

``fit`` takes atom positions as a one-column X (and the atom weights as
``sample_weight``) and solves up to ``T``. ``transform`` maps positions x
to rows [Phi_T(x), survival factor of an atom started at x].
``predict`` returns surviving total mass at the given times.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DomainError
from .flow import VelocityField, integrate
from .limit import solve_limit
from .measures import AtomicMeasure
from .regularized import (AbsorptionParams, Regularizer, absorption_exponents,
                          solve_closed_form, solve_picard, time_grid)
from .stochastic import simulate


def check_positions(X):
    """Validate a one-column array of positions in [0, 1]; returns a 1-D array."""
    X = check_array(X, ensure_2d=True, dtype=np.float64)
    if X.shape[1] != 1:
        raise ValueError(f"expected a single column of positions, got {X.shape[1]} columns")
    x = X[:, 0]
    if np.any((x < 0) | (x > 1)):
        raise DomainError("positions must lie in [0, 1]")
    return x


def check_times(t, horizon):
    t = check_array(np.asarray(t, dtype=float).reshape(-1, 1), dtype=np.float64)[:, 0]
    if np.any((t < 0) | (t > horizon * (1 + 1e-12))):
        raise DomainError(f"times must lie in [0, {horizon}]")
    return t


def _initial_measure(X, sample_weight):
    x = check_positions(X)
    w = np.ones_like(x) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if w.shape != x.shape:
        raise ValueError("sample_weight must have one entry per row of X")
    if np.any(w <= 0):
        raise DomainError("sample_weight must be positive")
    return AtomicMeasure(x, w)


def _velocity(v):
    return VelocityField.constant(1.0) if v is None else v


class LimitSolver(TransformerMixin, BaseEstimator):
    """Limit solution: atoms keep their weight until they stick, then decay at rate a."""

    def __init__(self, velocity=None, rate=1.0, T=1.0, dt=1e-3):
        self.velocity = velocity
        self.rate = rate
        self.T = T
        self.dt = dt

    def fit(self, X, y=None, sample_weight=None):
        mu0 = _initial_measure(X, sample_weight)
        self.velocity_ = _velocity(self.velocity)
        self.solution_ = solve_limit(self.velocity_, AbsorptionParams(self.rate), mu0, self.T, self.dt)
        self.trajectory_ = self.solution_.trajectory
        return self

    def transform(self, X):
        check_is_fitted(self, "solution_")
        x = check_positions(X)
        table = integrate(self.velocity_, x, time_grid(self.T, self.dt))
        decay = np.maximum(0.0, self.T - table.hitting_times)
        return np.column_stack((table.positions[-1], np.exp(-self.solution_.rate * decay)))

    def predict(self, t):
        check_is_fitted(self, "solution_")
        return np.array([self.solution_.total_mass_at(s) for s in check_times(t, self.T)])


class RegularizedSolver(TransformerMixin, BaseEstimator):
    """Boundary-layer solution with absorption profile f_n."""

    def __init__(self, velocity=None, n=2, rate=1.0, T=1.0, dt=1e-3, method="closed-form",
                 tol=1e-8, max_iter=100):
        self.velocity = velocity
        self.n = n
        self.rate = rate
        self.T = T
        self.dt = dt
        self.method = method
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None, sample_weight=None):
        mu0 = _initial_measure(X, sample_weight)
        self.velocity_ = _velocity(self.velocity)
        self.regularizer_ = Regularizer(self.n)
        a = AbsorptionParams(self.rate)
        if self.method == "picard":
            self.trajectory_ = solve_picard(self.velocity_, self.regularizer_, a, mu0, self.T,
                                            self.dt, tol=self.tol, max_iter=self.max_iter)
        elif self.method == "closed-form":
            self.trajectory_ = solve_closed_form(self.velocity_, self.regularizer_, a, mu0,
                                                 self.T, self.dt)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        return self

    def transform(self, X):
        check_is_fitted(self, "trajectory_")
        x = check_positions(X)
        table = integrate(self.velocity_, x, time_grid(self.T, self.dt), keep_steps=True)
        E = absorption_exponents(table, self.regularizer_)[-1]
        return np.column_stack((table.positions[-1], np.exp(-float(self.rate) * E)))

    def predict(self, t):
        check_is_fitted(self, "trajectory_")
        t = check_times(t, self.T)
        return np.array([self.trajectory_.at(s).total_mass for s in t])


class ParticleSimulator(BaseEstimator):
    """Monte Carlo particles drawn from the fitted initial measure."""

    def __init__(self, velocity=None, rate=1.0, n_particles=10_000, seed=0, bins=10):
        self.velocity = velocity
        self.rate = rate
        self.n_particles = n_particles
        self.seed = seed
        self.bins = bins

    def fit(self, X, y=None, sample_weight=None):
        self.initial_ = _initial_measure(X, sample_weight)
        self.velocity_ = _velocity(self.velocity)
        return self

    def report(self, t):
        check_is_fitted(self, "initial_")
        return simulate(self.velocity_, self.rate, self.initial_, self.n_particles, self.seed,
                        np.asarray(t, dtype=float).reshape(-1), bins=self.bins)

    def predict(self, t):
        """Empirical survivor fractions at times ``t``."""
        return self.report(t).survivor_count / self.n_particles
