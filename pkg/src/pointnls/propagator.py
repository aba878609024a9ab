"""Free Schrodinger group U(t) = exp(i t d^2/dx^2).

Convention: i psi_t = -psi_xx, so a plane wave exp(i k x) picks up the phase
exp(-i k^2 t). The convolution kernel of U(t) is

    U(t, x) = (4 pi i t)^(-1/2) exp(i x^2 / (4 t))

with the principal branch of the square root. ``free_evolve`` is the
production path; ``kernel_value`` is used by the point solver and by tests
that cross-check the two.
"""
from __future__ import annotations

import numpy as np

from .core import ComplexField, ConfigError, Grid1D


def kernel_value(t, x):
    """Kernel of U(t) at time ``t`` (nonzero) and offset ``x``.

    Broadcasts over array arguments.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t == 0):
        raise ValueError("U(0, x) is a delta distribution; kernel_value needs t != 0")
    x = np.asarray(x, dtype=float)
    pref = 1.0 / np.sqrt(4j * np.pi * t.astype(complex))
    return pref * np.exp(1j * x * x / (4.0 * t))


def free_multiplier(grid: Grid1D, t: float) -> np.ndarray:
    return np.exp(-1j * grid.k ** 2 * t)


def free_evolve(field: ComplexField, t: float) -> ComplexField:
    if t == 0:
        return field.replace(t=field.t)
    vals = np.fft.ifft(free_multiplier(field.grid, t) * np.fft.fft(field.values))
    return ComplexField(field.grid, vals, field.t + t)


def free_trace(psi0: ComplexField, times, site: float, chunk: int = 128) -> np.ndarray:
    """Values (U(t_n) psi0)(y) at the node ``y`` for each time in ``times``."""
    grid = psi0.grid
    m = grid.index_of(site)
    times = np.asarray(times, dtype=float)
    if times.size and (np.any(times < 0) or np.any(np.diff(times) < 0)):
        raise ConfigError("free_trace needs nonnegative ascending times")
    # psi(t, x_m) = (1/M) sum_j F_j exp(-i k_j^2 t) exp(2 pi i j m / M)
    coeff = np.fft.fft(psi0.values) * np.exp(2j * np.pi * np.arange(grid.M) * m / grid.M) / grid.M
    # modes this small cannot move the sum at double precision
    keep = np.abs(coeff) > 1e-18 * np.sum(np.abs(coeff))
    coeff = coeff[keep]
    k2 = grid.k[keep] ** 2
    out = np.empty(times.size, dtype=complex)
    for s in range(0, times.size, chunk):
        tt = times[s:s + chunk]
        out[s:s + chunk] = np.exp(-1j * np.outer(tt, k2)) @ coeff
    out[times == 0] = psi0.values[m]
    return out


def kernel_convolution(psi0: ComplexField, t: float) -> ComplexField:
    """U(t) psi0 by direct quadrature against ``kernel_value`` (test path, O(M^2))."""
    g = psi0.grid
    K = kernel_value(t, g.x[:, None] - g.x[None, :])
    return ComplexField(g, g.h * (K @ psi0.values), psi0.t + t)
