"""Split-step solver for the problem with scaled concentration profiles.

The potential of defect k is (1/eps) V_k((x - y_k)/eps). The nonlinear
substep i psi_t = W |psi|^(2 mu) psi leaves |psi| pointwise unchanged, so it
is solved exactly as a phase rotation; together with the exact free flow
this gives a Strang splitting that conserves the discrete mass to roundoff.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ComplexField, ConfigError, DefectSpec, Grid1D, ScaledProblem
from .propagator import free_evolve

log = logging.getLogger(__name__)

# Nodes where a profile is below this fraction of its peak are outside its support.
SUPPORT_RTOL = 1e-8


class SolverError(RuntimeError):
    pass


class BlowUpError(SolverError):
    def __init__(self, t: float, h1: float, limit: float):
        self.t, self.h1, self.limit = t, h1, limit
        super().__init__(f"blow-up guard tripped at t={t:.6g}: H1 norm {h1:.6g} exceeds {limit:.6g}")


def scaled_potential_on_grid(defects: Sequence[DefectSpec], epsilon: float, grid: Grid1D,
                             resolution_factor: float = 8.0) -> np.ndarray:
    """Per-defect scaled potentials, shape (N, M); row k is (1/eps) V_k((x - y_k)/eps).

    Values below ``SUPPORT_RTOL`` times the row's peak are set to zero so each
    row has a finite numerical support.
    """
    if grid.h > epsilon / resolution_factor * (1 + 1e-12):
        raise ConfigError(f"resolution rule violated: h={grid.h:g} > epsilon/{resolution_factor:g}")
    W = np.zeros((len(defects), grid.M))
    for k, d in enumerate(defects):
        # distance on the periodic circle, so sites near the edge wrap correctly
        s = (grid.x - d.y + grid.L) % (2 * grid.L) - grid.L
        row = d.profile(s / epsilon) / epsilon
        peak = np.max(np.abs(row))
        if peak > 0:
            row[np.abs(row) < SUPPORT_RTOL * peak] = 0.0
        W[k] = row
    return W


def check_disjoint(W: np.ndarray) -> None:
    W = np.atleast_2d(W)
    if W.shape[0] > 1 and np.any(np.count_nonzero(W, axis=0) > 1):
        raise ConfigError("defect supports overlap; the scaled potentials must be disjoint")


def _phase_rate(psi: np.ndarray, W: np.ndarray, mus: Sequence[float]) -> np.ndarray:
    a2 = np.abs(psi) ** 2
    rate = np.zeros(psi.shape)
    for row, mu in zip(np.atleast_2d(W), mus):
        if mu == 0:
            rate += row
        else:
            rate += row * a2 ** mu
    return rate


def nonlinear_phase_step(field: ComplexField, W: np.ndarray, mus: Sequence[float],
                         tau: float) -> ComplexField:
    """psi <- psi exp(-i tau W |psi|^(2 mu)), exact for the pointwise ODE."""
    W = np.atleast_2d(W)
    mus = np.atleast_1d(mus)
    if W.shape != (mus.size, field.grid.M):
        raise ConfigError(f"potential shape {W.shape} does not match {mus.size} defects on M={field.grid.M}")
    check_disjoint(W)
    psi = field.values
    return field.replace(psi * np.exp(-1j * tau * _phase_rate(psi, W, mus)))


def strang_step(field: ComplexField, W: np.ndarray, mus: Sequence[float], dt: float) -> ComplexField:
    half = free_evolve(field, 0.5 * dt)
    half = nonlinear_phase_step(half, W, mus, dt)
    return free_evolve(half, 0.5 * dt)


def energy_scaled(field: ComplexField, defects: Sequence[DefectSpec], epsilon: float) -> float:
    """Kinetic term plus sum_k (mu_k + 1)^-1 h sum W_k |psi|^(2 mu_k + 2)."""
    W = scaled_potential_on_grid(defects, epsilon, field.grid) if defects else np.zeros((0, field.grid.M))
    return _energy(field.values, field.grid, W, [d.mu for d in defects])


def _kinetic(psi_hat: np.ndarray, grid: Grid1D) -> float:
    # Parseval: h sum |psi'|^2 = (h / M) sum k^2 |psi_hat|^2
    return float(grid.h / grid.M * np.sum(grid.k_deriv ** 2 * np.abs(psi_hat) ** 2))


def _energy(psi: np.ndarray, grid: Grid1D, W: np.ndarray, mus, psi_hat=None) -> float:
    if psi_hat is None:
        psi_hat = np.fft.fft(psi)
    e = _kinetic(psi_hat, grid)
    a2 = np.abs(psi) ** 2
    for row, mu in zip(W, mus):
        e += grid.h * np.sum(row * a2 ** (mu + 1)) / (mu + 1)
    return float(e)


@dataclass
class ScaledTrajectory:
    epsilon: float
    dt: float
    sites: tuple
    step_times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    h1: np.ndarray
    traces: np.ndarray  # (N, nsteps + 1)
    output_steps: np.ndarray
    snapshots: list = field(default_factory=list)

    @property
    def output_times(self) -> np.ndarray:
        return self.step_times[self.output_steps]


def output_steps_for(times, dt: float, nsteps: int) -> np.ndarray:
    steps = np.rint(np.asarray(times, dtype=float) / dt).astype(int)
    if np.any(np.abs(steps * dt - np.asarray(times)) > 1e-9 * max(dt, 1.0)):
        raise ConfigError("output times must be integer multiples of dt")
    if np.any(steps < 0) or np.any(steps > nsteps):
        raise ConfigError("output times must lie in [0, T]")
    return steps


def run_scaled(problem: ScaledProblem, output_times=None, guard_factor: float = 1e3) -> ScaledTrajectory:
    """March the scaled problem to ``problem.T`` with Strang splitting.

    Mass, energy and H1 norm are recorded at every step together with the
    field values at the defect sites; full snapshots only at ``output_times``
    (default: start and end). Raises :class:`BlowUpError` when the H1 norm
    exceeds ``guard_factor`` times its initial value.
    """
    grid = problem.grid
    n = problem.nsteps
    dt = problem.dt
    defects = problem.defects
    mus = [d.mu for d in defects]
    if output_times is None:
        output_times = [0.0, problem.T]
    out_steps = output_steps_for(output_times, dt, n)
    want = {int(s) for s in out_steps}

    W = scaled_potential_on_grid(defects, problem.epsilon, grid, problem.resolution_factor) \
        if defects else np.zeros((0, grid.M))
    check_disjoint(W)
    active = [(row, mu) for row, mu in zip(W, mus) if np.any(row)]
    idx = [grid.index_of(d.y) for d in defects]
    half = np.exp(-0.5j * grid.k ** 2 * dt)
    kd2 = grid.k_deriv ** 2

    mass = np.empty(n + 1)
    energy = np.empty(n + 1)
    h1 = np.empty(n + 1)
    traces = np.empty((len(defects), n + 1), dtype=complex)
    snaps = {}

    psi = problem.psi0.values.copy()
    psi_hat = np.fft.fft(psi)

    def record(j, psi, psi_hat):
        m = grid.h * np.sum(np.abs(psi) ** 2)
        kin = grid.h / grid.M * np.sum(kd2 * np.abs(psi_hat) ** 2)
        a2 = np.abs(psi) ** 2
        pot = sum(grid.h * np.sum(row * a2 ** (mu + 1)) / (mu + 1) for row, mu in zip(W, mus))
        mass[j], energy[j], h1[j] = m, kin + pot, np.sqrt(m + kin)
        traces[:, j] = psi[idx]
        if j in want:
            snaps[j] = ComplexField(grid, psi, j * dt)

    record(0, psi, psi_hat)
    limit = guard_factor * h1[0] if h1[0] > 0 else np.inf
    for j in range(1, n + 1):
        psi = np.fft.ifft(half * psi_hat)
        if active:
            a2 = np.abs(psi) ** 2
            rate = np.zeros(grid.M)
            for row, mu in active:
                rate += row if mu == 0 else row * a2 ** mu
            psi = psi * np.exp(-1j * dt * rate)
        psi_hat = half * np.fft.fft(psi)
        psi = np.fft.ifft(psi_hat)
        record(j, psi, psi_hat)
        if not np.isfinite(h1[j]) or h1[j] > limit:
            log.warning("blow-up guard at t=%g (H1=%g)", j * dt, h1[j])
            raise BlowUpError(j * dt, float(h1[j]), float(limit))

    return ScaledTrajectory(problem.epsilon, dt, tuple(d.y for d in defects), dt * np.arange(n + 1),
                            mass, energy, h1, traces, out_steps, [snaps[int(s)] for s in out_steps])
