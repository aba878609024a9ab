import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pointnls.core import ComplexField, ConfigError, make_grid
from pointnls.diagnostics import h1_norm
from pointnls.propagator import free_evolve, free_trace, kernel_convolution, kernel_value


def gaussian_free(x, t):
    # exact solution of i u_t = -u_xx with u(0) = exp(-x^2)
    return (1 + 4j * t) ** -0.5 * np.exp(-x ** 2 / (1 + 4j * t))


def test_kernel_at_unit_time():
    val = kernel_value(1.0, 0.0)
    assert val == pytest.approx(np.exp(-0.25j * np.pi) / (2 * np.sqrt(np.pi)), abs=1e-15)
    # cos(pi/4) / (2 sqrt(pi)) = 0.1994711...
    assert val.real == pytest.approx(0.199471140, abs=1e-9)
    assert val.imag == pytest.approx(-0.199471140, abs=1e-9)


@given(st.floats(-50, 50))
def test_kernel_modulus(x):
    assert abs(kernel_value(1.0, x)) == pytest.approx(1 / (2 * np.sqrt(np.pi)), rel=1e-13)


@given(st.floats(1e-3, 10), st.floats(-20, 20))
def test_kernel_modulus_any_time(t, x):
    assert abs(kernel_value(t, x)) == pytest.approx((4 * np.pi * t) ** -0.5, rel=1e-12)


def test_kernel_half_time():
    val = kernel_value(0.5, 1.0)
    assert val == pytest.approx(np.exp(-0.25j * np.pi) / np.sqrt(2 * np.pi) * np.exp(0.5j), abs=1e-15)


def test_kernel_rejects_zero_time():
    with pytest.raises(ValueError):
        kernel_value(0.0, 1.0)


def test_zero_time_identity():
    g = make_grid(16, 128)
    f = ComplexField(g, np.exp(-g.x ** 2))
    assert np.array_equal(free_evolve(f, 0.0).values, f.values)


def test_plane_wave_phase():
    g = make_grid(16, 256)
    k0 = 5 * np.pi / g.L
    f = ComplexField(g, np.exp(1j * k0 * g.x))
    out = free_evolve(f, 0.7)
    assert np.max(np.abs(out.values - np.exp(-1j * k0 ** 2 * 0.7) * f.values)) < 1e-12
    assert out.t == pytest.approx(0.7)


def test_gaussian_closed_form():
    g = make_grid(16, 1024)
    f = ComplexField(g, np.exp(-g.x ** 2))
    err = np.max(np.abs(free_evolve(f, 0.25).values - gaussian_free(g.x, 0.25)))
    assert err < 1e-10


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
@settings(max_examples=30, deadline=None)
def test_unitarity_and_group(seed, s, t):
    g = make_grid(8, 256)
    rng = np.random.default_rng(seed)
    f = ComplexField(g, np.exp(-g.x ** 2) * (rng.standard_normal(g.M) * 0.1 + 1 + 1j * rng.standard_normal(g.M) * 0.1))
    a = free_evolve(free_evolve(f, s), t)
    b = free_evolve(f, s + t)
    assert np.max(np.abs(a.values - b.values)) < 1e-12 * max(1.0, np.max(np.abs(f.values)))
    assert a.norm() == pytest.approx(f.norm(), rel=1e-12)
    assert h1_norm(a) == pytest.approx(h1_norm(f), rel=1e-12)


def test_kernel_matches_spectral():
    # kernel quadrature agrees with the spectral path for compactly supported data
    g = make_grid(8, 512)
    f = ComplexField(g, np.exp(-4 * g.x ** 2))
    t = 0.05
    a = kernel_convolution(f, t).values
    b = free_evolve(f, t).values
    assert np.max(np.abs(a - b)) < 1e-6


def test_kernel_sign_convention():
    # a sign error would make the kernel evolve backwards in time
    g = make_grid(8, 512)
    f = ComplexField(g, np.exp(-4 * g.x ** 2))
    back = kernel_convolution(f, -0.05).values
    assert np.max(np.abs(back - free_evolve(f, 0.05).values)) > 1e-2


def test_free_trace_gaussian():
    g = make_grid(16, 1024)
    f = ComplexField(g, np.exp(-g.x ** 2))
    times = np.linspace(0, 0.5, 11)
    tr = free_trace(f, times, 0.0)
    assert tr[0] == f.values[g.M // 2]
    assert np.max(np.abs(tr - gaussian_free(0.0, times))) < 1e-10


def test_free_trace_matches_free_evolve_off_centre():
    g = make_grid(8, 256)
    f = ComplexField(g, np.exp(-(g.x - 0.5) ** 2 + 1j * g.x))
    times = [0.0, 0.1, 0.3]
    tr = free_trace(f, times, 1.0)
    ref = [free_evolve(f, t).at(1.0) for t in times]
    assert np.max(np.abs(tr - ref)) < 1e-13


def test_free_trace_zero_data():
    g = make_grid(8, 64)
    assert np.all(free_trace(ComplexField(g, np.zeros(g.M)), [0.0, 0.5, 1.0], 0.0) == 0)


def test_free_trace_site_must_be_node():
    g = make_grid(8, 64)
    with pytest.raises(ConfigError):
        free_trace(ComplexField(g, np.zeros(g.M)), [0.1], 0.1)
