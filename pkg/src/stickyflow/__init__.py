"""Measure transport on [0, 1] with a sticky, partially absorbing boundary at 1."""

from .estimators import LimitSolver, ParticleSimulator, RegularizedSolver
from .exceptions import (ArgumentError, DomainError, IterationLimitError, LPError,
                         NumericalError)
from .flow import (FlowResult, VelocityField, flow_map, hitting_time, integrate,
                   interior_time, lipschitz_certificate)
from .harness import RateReport, StudyConfig, convergence_study, write_rate_csv
from .limit import (LimitSolution, continuous_dependence_bound, equation_residual,
                    estimate_lip_tau, mass_loss_check, solve_limit)
from .measures import (AtomicMeasure, BLFunction, DensitySpec, density_to_atoms,
                       dual_bl_norm, leq, pair, push_forward, tv_norm)
from .regularized import (AbsorptionParams, MeasureTrajectory, Regularizer,
                          apply_absorption, free_transport, regularizer_gap,
                          solve_closed_form, solve_picard)
from .stochastic import (EmpiricalReport, ParticleEnsemble, compare_to_analytic,
                         simulate)

__version__ = "0.1.0"
