"""Scaled and point-concentrated nonlinear Schrodinger equations in one dimension.

The scaled problem has nonlinear potentials (1/eps) V_k((x - y_k)/eps); its
eps -> 0 limit is a point interaction at each y_k with strength
alpha_k = int V_k. :mod:`pointnls.scaled` solves the former by split-step
Fourier, :mod:`pointnls.point` the latter through Volterra equations for the
site traces, and :mod:`pointnls.harness` measures how fast one approaches
the other.
"""
from .core import (AdmissibilityError, ChargeTrajectory, ComplexField, ConfigError, DefectSpec, Grid1D,
                   PointProblem, PotentialProfile, ScaledProblem, make_grid, potential_moments)
from .diagnostics import ErrorSample, RateFit, compare, error_ladder, fit_rate, h1_norm
from .harness import (ExperimentPlan, canonical_plan, plan_from_config, run_convergence_experiment,
                      run_self_convergence, validate_domain)
from .point import (ConvergenceError, PointTrajectory, abel_weights, energy_point, jump_residual,
                    reconstruct_field, run_point, solve_charges)
from .propagator import free_evolve, free_trace, kernel_value
from .scaled import BlowUpError, ScaledTrajectory, SolverError, energy_scaled, run_scaled

__version__ = "0.1.0"
