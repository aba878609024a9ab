"""Norms, error ladders and power-law fits."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ComplexField, Grid1D


class DegenerateFitError(ValueError):
    """Some errors are zero (exact agreement); a power law cannot be fitted."""


class LatticeMismatchError(ValueError):
    pass


def l2_norm(values, grid: Grid1D) -> float:
    return float(np.sqrt(grid.h * np.sum(np.abs(values) ** 2)))


def h1_seminorm(values, grid: Grid1D) -> float:
    vh = np.fft.fft(values)
    return float(np.sqrt(grid.h / grid.M * np.sum(grid.k_deriv ** 2 * np.abs(vh) ** 2)))


def h1_norm(field) -> float:
    """sqrt(||psi||^2 + ||psi'||^2), derivative taken spectrally."""
    g = field.grid
    return float(np.hypot(l2_norm(field.values, g), h1_seminorm(field.values, g)))


def sup_norm(field: ComplexField) -> float:
    return float(np.max(np.abs(field.values)))


def gn_bound(field: ComplexField) -> float:
    """sqrt(2 ||psi|| ||psi'||), the one-dimensional Gagliardo-Nirenberg bound on sup |psi|."""
    g = field.grid
    return float(np.sqrt(2.0 * l2_norm(field.values, g) * h1_seminorm(field.values, g)))


@dataclass
class ErrorSample:
    epsilon: float
    pointwise: float
    l2: float
    h1: float
    pointwise_per_site: np.ndarray = field(default_factory=lambda: np.zeros(0))
    l2_time: np.ndarray = field(default_factory=lambda: np.zeros(0))
    h1_time: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pointwise_time: np.ndarray = field(default_factory=lambda: np.zeros(0))  # summed over sites

    def get(self, which: str) -> float:
        return {"pointwise": self.pointwise, "l2": self.l2, "h1": self.h1}[which]


@dataclass
class RateFit:
    which: str
    delta: float
    prefactor: float
    residual: float
    eps_range: tuple
    n_points: int

    def summary(self) -> str:
        return (f"{self.which}: delta={self.delta:.4f} c={self.prefactor:.4g} "
                f"residual={self.residual:.3g} eps=[{self.eps_range[0]:g}, {self.eps_range[1]:g}] "
                f"n={self.n_points}")


def compare(scaled, point, lattice=None) -> ErrorSample:
    """Sup-in-time errors between one scaled trajectory and the limit trajectory.

    ``lattice`` optionally restricts the L2/H1 sup to a subset of the shared
    output steps; the pointwise sup always runs over every step.
    """
    if scaled.dt != point.charges.dt or not np.array_equal(scaled.output_steps, point.output_steps):
        raise LatticeMismatchError("scaled and limit runs use different time lattices")
    if tuple(scaled.sites) != tuple(point.charges.sites):
        raise LatticeMismatchError("scaled and limit runs have different defect sites")
    if scaled.snapshots and scaled.snapshots[0].grid != point.snapshots[0].grid:
        raise LatticeMismatchError("scaled and limit runs use different grids")
    diff = np.abs(scaled.traces - point.charges.traces)
    if diff.shape[0]:
        per_site = diff.max(axis=1)
        pw_t = diff.sum(axis=0)
    else:
        per_site, pw_t = np.zeros(0), np.zeros(scaled.traces.shape[1])
    l2_t = np.empty(len(scaled.snapshots))
    h1_t = np.empty(len(scaled.snapshots))
    for i, (a, b) in enumerate(zip(scaled.snapshots, point.snapshots)):
        d = a.values - b.values
        l2_t[i] = l2_norm(d, a.grid)
        h1_t[i] = np.hypot(l2_t[i], h1_seminorm(d, a.grid))
    sel = np.arange(len(l2_t)) if lattice is None else np.searchsorted(scaled.output_steps, lattice)
    return ErrorSample(scaled.epsilon, float(per_site.max()) if per_site.size else 0.0,
                       float(l2_t[sel].max()) if sel.size else 0.0,
                       float(h1_t[sel].max()) if sel.size else 0.0,
                       per_site, l2_t, h1_t, pw_t)


def error_ladder(scaled_runs: Sequence, point_run) -> list[ErrorSample]:
    """One ErrorSample per scaled run, all against the same limit run."""
    return [compare(s, point_run) for s in scaled_runs]


def fit_rate(samples: Sequence[ErrorSample], which: str = "l2") -> RateFit:
    """Least squares of log(err) = log(c) + delta log(eps).

    ``residual`` is the root-mean-square deviation of the fit in natural-log
    units.
    """
    if which not in ("pointwise", "l2", "h1"):
        raise ValueError(f"unknown error kind {which!r}")
    if len(samples) < 3:
        raise ValueError(f"rate fit needs at least 3 samples, got {len(samples)}")
    eps = np.array([s.epsilon for s in samples], dtype=float)
    err = np.array([s.get(which) for s in samples], dtype=float)
    if np.any(err <= 0):
        raise DegenerateFitError(f"{which} errors contain non-positive values {err.tolist()}")
    X = np.log(eps)
    Y = np.log(err)
    A = np.vstack([X, np.ones_like(X)]).T
    (delta, logc), *_ = np.linalg.lstsq(A, Y, rcond=None)
    r = Y - (delta * X + logc)
    return RateFit(which, float(delta), float(np.exp(logc)), float(np.sqrt(np.mean(r * r))),
                   (float(eps.min()), float(eps.max())), len(samples))


def observed_orders(errors: Sequence[float], factor: float = 2.0) -> list[float]:
    """log_factor(e_i / e_{i+1}) for consecutive refinement levels."""
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return [float(v) for v in np.log(e[:-1] / e[1:]) / np.log(factor)]
