"""Fast sanity checks of every module on tiny grids (used by ``pointnls self-test``)."""
from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (ComplexField, ConfigError, DefectSpec, PointProblem, PotentialProfile, ScaledProblem, make_grid,
                   potential_moments)
from .diagnostics import ErrorSample, compare, fit_rate, h1_norm
from .point import abel_weights, energy_point, jump_residual, reconstruct_field, run_point, solve_charges
from .propagator import free_evolve, free_trace, kernel_value
from .scaled import energy_scaled, nonlinear_phase_step, run_scaled, scaled_potential_on_grid, strang_step


@dataclass
class CheckResult:
    module: str
    name: str
    ok: bool
    detail: str = ""
    seconds: float = 0.0


def _close(a, b, tol):
    err = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
    assert err <= tol, f"difference {err:.3e} > {tol:.1e}"


def _raises(exc, fn):
    try:
        fn()
    except exc:
        return
    raise AssertionError(f"expected {exc.__name__}")


def _gauss(g):
    return ComplexField(g, np.exp(-g.x ** 2))


def _core():
    g = make_grid(8, 16)
    yield "grid spacing and centre node", lambda: (_close(g.h, 1.0, 0), _close(g.x[8], 0.0, 0))
    yield "two-node grid", lambda: _close(make_grid(1, 2).x, [-1.0, 0.0], 0)
    yield "non-power-of-two rejected", lambda: _raises(ConfigError, lambda: make_grid(8, 7))
    yield "box moments", lambda: _close(potential_moments(PotentialProfile("box", {"height": 1.0, "width": 1.0})),
                                        [1.0, 0.25], 1e-12)
    yield "zero profile moments", lambda: _close(potential_moments(PotentialProfile("zero")), [0.0, 0.0], 0)


def _propagator():
    g = make_grid(8, 64)
    psi = _gauss(g)
    yield "kernel modulus", lambda: _close(abs(kernel_value(1.0, 3.7)), 1 / (2 * np.sqrt(np.pi)), 1e-15)
    yield "zero time is identity", lambda: _close(free_evolve(psi, 0.0).values, psi.values, 0)

    def plane():
        k0 = 3 * np.pi / g.L
        f = ComplexField(g, np.exp(1j * k0 * g.x))
        _close(free_evolve(f, 0.3).values, np.exp(-1j * k0 ** 2 * 0.3) * f.values, 1e-12)
    yield "plane wave eigenfunction", plane
    yield "trace at t=0", lambda: _close(free_trace(psi, [0.0], 0.0), [psi.values[32]], 0)
    yield "zero data trace", lambda: _close(free_trace(ComplexField(g, np.zeros(64)), [0.1, 0.2], 0.0), 0, 0)


def _scaled():
    g = make_grid(4, 256)
    box = PotentialProfile("box", {"height": 1.0, "width": 1.0})

    def box_w():
        W = scaled_potential_on_grid([DefectSpec(0.0, box, 0.5)], 0.25, g)[0]
        inside = np.abs(g.x) <= 0.125
        _close(W[inside], 4.0, 0)
        _close(W[~inside], 0.0, 0)
    yield "box rescaling", box_w
    gp = PotentialProfile("gaussian", {"alpha": 1.0})
    yield "epsilon one", lambda: _close(scaled_potential_on_grid([DefectSpec(0.0, gp, 0.5)], 1.0, g)[0],
                                        gp(g.x), 1e-15)
    psi = _gauss(g)
    zero = np.zeros((1, g.M))
    yield "zero potential phase step", lambda: _close(nonlinear_phase_step(psi, zero, [0.5], 0.1).values, psi.values, 0)
    yield "constant potential, mu=0", lambda: _close(
        nonlinear_phase_step(psi, np.full((1, g.M), 2.0), [0.0], 0.1).values, np.exp(-0.2j) * psi.values, 1e-15)
    yield "phase step keeps modulus", lambda: _close(
        np.abs(nonlinear_phase_step(psi, np.ones((1, g.M)), [0.5], 0.3).values), np.abs(psi.values), 1e-15)
    yield "strang step without potential", lambda: _close(strang_step(psi, zero, [0.5], 0.01).values,
                                                          free_evolve(psi, 0.01).values, 1e-13)
    yield "strang step at dt=0", lambda: _close(strang_step(psi, np.ones((1, g.M)), [0.5], 0.0).values, psi.values, 1e-14)
    zp = PotentialProfile("zero")
    yield "energy without potential", lambda: _close(energy_scaled(psi, [DefectSpec(0.0, zp, 0.5)], 0.25),
                                                    energy_point(psi, [], [], []), 1e-14)
    yield "energy of zero field", lambda: _close(energy_scaled(ComplexField(g, np.zeros(g.M)),
                                                               [DefectSpec(0.0, gp, 0.5)], 0.25), 0.0, 0)

    def free_run():
        tr = run_scaled(ScaledProblem([DefectSpec(0.0, zp, 0.5)], 0.25, psi, 0.1, 0.01), [0.1])
        _close(tr.snapshots[-1].values, free_evolve(psi, 0.1).values, 1e-12)
    yield "zero potential run is free", free_run


def _point():
    g = make_grid(4, 256)
    psi = _gauss(g)
    yield "abel weights on zero data", lambda: _close(abel_weights(1, 0.01) @ np.zeros(2), 0.0, 0)

    def decoupled():
        ch = solve_charges(PointProblem((0.0,), (0.0,), (0.5,), psi, 0.05, 0.01))
        _close(ch.traces[0], free_trace(psi, ch.times, 0.0), 1e-13)
    yield "alpha=0 traces are free", decoupled

    def zero_data():
        ch = solve_charges(PointProblem((0.0,), (1.0,), (0.5,), ComplexField(g, np.zeros(g.M)), 0.05, 0.01))
        _close(ch.charges, 0.0, 0)
    yield "zero data gives zero charges", zero_data
    pb = PointProblem((0.0,), (1.0,), (0.5,), psi, 0.05, 0.01)
    ch = solve_charges(pb)
    yield "reconstruction at t=0", lambda: _close(reconstruct_field(pb, ch, 0.0).values, psi.values, 0)

    def free_recon():
        pf = PointProblem((0.0,), (0.0,), (0.5,), psi, 0.05, 0.01)
        _close(reconstruct_field(pf, solve_charges(pf), 0.05).values, free_evolve(psi, 0.05).values, 1e-13)
    yield "alpha=0 reconstruction is free", free_recon
    yield "energy of zero field", lambda: _close(energy_point(ComplexField(g, np.zeros(g.M)), [0.0], [1.0], [0.5]), 0, 0)
    yield "energy with alpha=0", lambda: _close(energy_point(psi, [1.0], [0.0], [0.5]), energy_point(psi, [], [], []), 0)
    fine = _gauss(make_grid(4, 4096))
    yield "jump of smooth field", lambda: _close(jump_residual(fine, fine.at(0.0), 0.0, 0.5), 0.0, 1e-9)
    yield "jump of zero field", lambda: _close(jump_residual(ComplexField(g, np.zeros(g.M)), 0.0, 1.0, 0.5), 0.0, 0)


def _diagnostics():
    g = make_grid(4, 64)
    yield "norm of zero", lambda: _close(h1_norm(ComplexField(g, np.zeros(g.M))), 0.0, 0)

    def mode():
        k = 2 * np.pi / g.L
        _close(h1_norm(ComplexField(g, 0.7 * np.exp(1j * k * g.x))), 0.7 * np.sqrt(2 * g.L) * np.sqrt(1 + k * k), 1e-12)
    yield "single mode", mode

    def identical():
        psi = _gauss(g)
        zp = PotentialProfile("zero")
        d = [DefectSpec(0.0, zp, 0.5)]
        s = run_scaled(ScaledProblem(d, 1.0, psi, 0.02, 0.01), [0.02])
        p = run_point(PointProblem.from_defects(d, psi, 0.02, 0.01), [0.02])
        e = compare(s, p)
        _close([e.pointwise, e.l2, e.h1], 0.0, 1e-12)
    yield "free flows agree", identical
    eps = [0.1, 0.05, 0.025]
    yield "exact power law", lambda: _close(
        fit_rate([ErrorSample(e, 0, 0.1 * e ** 0.5, 0) for e in eps], "l2").delta, 0.5, 1e-10)
    yield "constant errors", lambda: _close(fit_rate([ErrorSample(e, 0, 0.3, 0) for e in eps], "l2").delta, 0.0, 1e-10)


def _harness():
    from .harness import plan_from_config, run_convergence_experiment, validate_domain
    base = {
        "grid": {"L": 4.0, "M": 128},
        "defects": [{"y": 0.0, "mu": 0.5, "potential": {"kind": "zero"}}],
        "psi0": {"kind": "gaussian"},
        "T": 0.02, "dt": 0.005, "ladder": [0.8, 0.6, 0.5], "outputs": 4,
    }

    def trivial():
        with tempfile.TemporaryDirectory() as tmp:
            res = run_convergence_experiment(plan_from_config(base, tmp), parallel=False, plots=False)
            assert all(isinstance(f, str) and f.startswith("degenerate") for f in res.fits.values()), res.fits
            assert (Path(tmp) / "ladder.csv").exists()
    yield "trivial plan is degenerate", trivial
    zero = dict(base, psi0={"kind": "zero"})
    yield "zero data passes domain check", lambda: _raises_not(validate_domain(plan_from_config(zero, None)))


def _raises_not(report):
    assert report.passed, report.message


def _cli():
    from .cli import main
    yield "unknown subcommand", lambda: _close(main(["no-such-command"], stderr=_Null()), 2, 0)


class _Null:
    def write(self, *_):
        pass

    def flush(self):
        pass


MODULES = {"core": _core, "propagator": _propagator, "scaled_solver": _scaled, "point_solver": _point,
           "diagnostics": _diagnostics, "harness": _harness, "cli": _cli}


def run_self_test() -> list[CheckResult]:
    results = []
    for module, gen in MODULES.items():
        try:
            checks = list(gen())
        except Exception as exc:  # setup failure counts against the module
            results.append(CheckResult(module, "setup", False, f"{type(exc).__name__}: {exc}"))
            continue
        for name, fn in checks:
            t0 = time.perf_counter()
            try:
                fn()
                results.append(CheckResult(module, name, True, seconds=time.perf_counter() - t0))
            except Exception as exc:
                results.append(CheckResult(module, name, False, f"{type(exc).__name__}: {exc}",
                                           time.perf_counter() - t0))
    return results
