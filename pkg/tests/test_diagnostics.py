import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pointnls.core import ComplexField, DefectSpec, PointProblem, PotentialProfile, ScaledProblem, make_grid
from pointnls.diagnostics import (DegenerateFitError, ErrorSample, LatticeMismatchError, compare, error_ladder,
                                  fit_rate, gn_bound, h1_norm, h1_seminorm, l2_norm, observed_orders)
from pointnls.point import run_point
from pointnls.scaled import run_scaled

GAUSS = PotentialProfile("gaussian", {"alpha": 1.0})


def test_h1_of_zero():
    g = make_grid(4, 64)
    assert h1_norm(ComplexField(g, np.zeros(g.M))) == 0


@pytest.mark.parametrize("mode", [0, 1, 5])
def test_h1_single_mode(mode):
    g = make_grid(4, 64)
    k = np.pi * mode / g.L
    a = 0.3 - 0.4j
    f = ComplexField(g, a * np.exp(1j * k * g.x))
    assert h1_norm(f) == pytest.approx(abs(a) * np.sqrt(2 * g.L) * np.sqrt(1 + k * k), rel=1e-12)


def test_gaussian_norms():
    # int e^{-2x^2} = sqrt(pi/2) and int 4 x^2 e^{-2x^2} = sqrt(pi/2)
    g = make_grid(16, 1024)
    v = np.exp(-g.x ** 2)
    assert l2_norm(v, g) ** 2 == pytest.approx(np.sqrt(np.pi / 2), abs=1e-10)
    assert h1_seminorm(v, g) ** 2 == pytest.approx(np.sqrt(np.pi / 2), abs=1e-10)


def _pair(eps, defects, T=0.05, dt=5e-3, M=512, L=8.0, times=(0.025, 0.05)):
    g = make_grid(L, M)
    psi0 = ComplexField(g, np.exp(-g.x ** 2))
    s = run_scaled(ScaledProblem(defects, eps, psi0, T, dt), list(times))
    p = run_point(PointProblem.from_defects(defects, psi0, T, dt), list(times), jump=False)
    return s, p


def test_identical_flows_give_zero():
    s, p = _pair(0.5, [DefectSpec(0.0, GAUSS, 0.5)])
    p.charges = type(p.charges)(p.charges.dt, p.charges.sites, p.charges.mus, s.traces)
    p.snapshots = list(s.snapshots)
    e = compare(s, p)
    assert (e.pointwise, e.l2, e.h1) == (0.0, 0.0, 0.0)


def test_free_flows_agree_to_roundoff():
    zero = PotentialProfile("zero")
    s, p = _pair(0.5, [DefectSpec(0.0, zero, 0.5)])
    e = compare(s, p)
    assert max(e.pointwise, e.l2, e.h1) < 1e-12


def test_lattice_mismatch():
    d = [DefectSpec(0.0, GAUSS, 0.5)]
    s, _ = _pair(0.5, d)
    _, p = _pair(0.5, d, times=(0.05,))
    with pytest.raises(LatticeMismatchError):
        compare(s, p)
    _, p2 = _pair(0.5, d, dt=2.5e-3)
    with pytest.raises(LatticeMismatchError):
        compare(s, p2)


def test_errors_decrease_and_norm_chain():
    d = [DefectSpec(0.0, GAUSS, 0.5)]
    g = make_grid(8, 2048)
    psi0 = ComplexField(g, np.exp(-g.x ** 2))
    T, dt = 0.1, 1e-3
    times = [0.025, 0.05, 0.075, 0.1]
    p = run_point(PointProblem.from_defects(d, psi0, T, dt), times, jump=False)
    runs = [run_scaled(ScaledProblem(d, eps, psi0, T, dt), times) for eps in (0.4, 0.2, 0.1)]
    samples = error_ladder(runs, p)
    for which in ("pointwise", "l2", "h1"):
        errs = [s.get(which) for s in samples]
        assert errs[0] > errs[1] > errs[2]
    for run, s in zip(runs, samples):
        assert np.all(s.l2_time <= s.h1_time)
        for i, n in enumerate(run.output_steps):
            diff = ComplexField(g, run.snapshots[i].values - p.snapshots[i].values)
            assert abs(run.traces[0, n] - p.charges.traces[0, n]) <= gn_bound(diff) * (1 + 1e-12)


def test_fit_exact_half_power():
    samples = [ErrorSample(e, v, v, v) for e, v in ((0.1, 0.0316228), (0.05, 0.0223607), (0.025, 0.0158114))]
    fit = fit_rate(samples, "l2")
    assert fit.delta == pytest.approx(0.5, abs=1e-5)
    assert fit.prefactor == pytest.approx(0.1, rel=1e-4)
    assert fit.residual < 1e-5
    assert fit.n_points == 3 and fit.eps_range == (0.025, 0.1)


def test_fit_constant():
    fit = fit_rate([ErrorSample(e, 0.2, 0.2, 0.2) for e in (0.4, 0.2, 0.1)], "pointwise")
    assert fit.delta == pytest.approx(0.0, abs=1e-12)


def test_fit_mixed_rates():
    eps = np.array([0.4, 0.2, 0.1, 0.05, 0.025])
    err = 0.1 * eps ** 0.5 + eps ** 1.0
    fit = fit_rate([ErrorSample(e, v, v, v) for e, v in zip(eps, err)], "h1")
    assert 0.5 < fit.delta < 1.0
    assert fit.residual > 0


@given(st.floats(0.05, 2.0), st.floats(1e-3, 10.0), st.integers(3, 8))
@settings(max_examples=50)
def test_fit_recovers_exponent(delta, c, n):
    eps = 0.4 * 0.5 ** np.arange(n)
    samples = [ErrorSample(e, c * e ** delta, 0, 0) for e in eps]
    fit = fit_rate(samples, "pointwise")
    assert abs(fit.delta - delta) < 1e-10
    assert fit.prefactor == pytest.approx(c, rel=1e-9)


def test_fit_rejects_zero_errors():
    with pytest.raises(DegenerateFitError):
        fit_rate([ErrorSample(e, 0.0, 0.0, 0.0) for e in (0.4, 0.2, 0.1)], "l2")


def test_fit_needs_three_points():
    with pytest.raises(ValueError):
        fit_rate([ErrorSample(e, 1.0, 1.0, 1.0) for e in (0.4, 0.2)], "l2")


def test_fit_rejects_unknown_norm():
    with pytest.raises(ValueError):
        fit_rate([ErrorSample(e, 1.0, 1.0, 1.0) for e in (0.4, 0.2, 0.1)], "linf")


def test_observed_orders():
    assert observed_orders([1.0, 0.25, 0.0625]) == pytest.approx([2.0, 2.0])
    assert observed_orders([1.0, 0.5], factor=4) == pytest.approx([0.5])
