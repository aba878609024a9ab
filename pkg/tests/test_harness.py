import numpy as np
import pytest

from pointnls.config import _merge
from pointnls.core import ConfigError
from pointnls.harness import (CANONICAL, ExperimentError, canonical_plan, fit_all, plan_from_config,
                              run_convergence_experiment, run_self_convergence, validate_domain)
from pointnls.diagnostics import ErrorSample
from pointnls.io import read_csv

SMALL = _merge(CANONICAL, {"grid": {"L": 8.0, "M": 1024}, "T": 0.1, "dt": 1e-3,
                           "ladder": [0.4, 0.2, 0.125], "outputs": 4})


def small(**extra):
    return plan_from_config(_merge(SMALL, extra))


def test_canonical_plan():
    plan = canonical_plan()
    assert plan.grid.h <= min(plan.ladder) / 8
    assert plan.nsteps == 8000 and len(plan.output_steps) == 64
    assert plan.output_times[-1] == pytest.approx(0.5)


@pytest.mark.parametrize("ladder", [[0.1, 0.2], [0.2, 0.2], [0.2, -0.1], []])
def test_ladder_validated(ladder):
    with pytest.raises(ConfigError):
        small(ladder=ladder)


def test_resolution_rule():
    with pytest.raises(ConfigError, match="resolution"):
        small(grid={"M": 256})


def test_output_steps_unique():
    plan = small(outputs=1000)
    assert len(plan.output_steps) == plan.nsteps
    assert np.all(np.diff(plan.output_steps) > 0)


def test_trivial_plan_is_degenerate():
    plan = small(defects=[{"y": 0.0, "mu": 0.5, "potential": {"kind": "zero"}}])
    res = run_convergence_experiment(plan, parallel=False, write=False)
    assert all(max(s.pointwise, s.l2, s.h1) < 1e-12 for s in res.samples)
    assert all(isinstance(f, str) and f.startswith("degenerate") for f in res.fits.values())


def test_small_ladder_decreases(tmp_path):
    plan = plan_from_config(SMALL, tmp_path / "out")
    res = run_convergence_experiment(plan, parallel=False, plots=False)
    h1 = [s.h1 for s in res.samples]
    assert h1[0] > h1[1] > h1[2]
    assert res.fits["pointwise"].n_points == 3
    names = {p.name for p in (tmp_path / "out").iterdir()}
    assert {"resolved_config.yaml", "ladder.csv", "fits.csv", "report.txt", "point_charges.csv",
            "point_summary.csv", "snapshots"} <= names
    rows = read_csv(tmp_path / "out" / "ladder.csv")
    assert [float(r["epsilon"]) for r in rows] == [0.4, 0.2, 0.125]
    assert float(rows[-1]["err_h1"]) == res.samples[-1].h1


def test_parallel_matches_sequential():
    plan = small()
    a = run_convergence_experiment(plan, parallel=False, write=False)
    b = run_convergence_experiment(plan, parallel=True, workers=2, write=False)
    for x, y in zip(a.samples, b.samples):
        assert (x.pointwise, x.l2, x.h1) == (y.pointwise, y.l2, y.h1)


def test_deterministic():
    plan = small(ladder=[0.2])
    a = run_convergence_experiment(plan, parallel=False, write=False)
    b = run_convergence_experiment(plan, parallel=False, write=False)
    assert a.report == b.report


def test_failure_names_epsilon():
    plan = small(defects=[{"y": 0.0, "mu": 1.5, "potential": {"kind": "gaussian", "params": {"alpha": -5.0}}}],
                 psi0={"kind": "gaussian", "params": {"amplitude": 3.0}}, allow_inadmissible=True,
                 solver={"guard_factor": 1.2}, ladder=[0.4], T=0.5)
    with pytest.raises(ExperimentError) as info:
        run_convergence_experiment(plan, parallel=False, write=False)
    assert info.value.epsilon in (None, 0.4)


def test_fit_all_excludes_largest():
    samples = [ErrorSample(e, e, e, e) for e in (0.4, 0.2, 0.1, 0.05)]
    fits = fit_all(samples)
    assert fits["l2"].n_points == 3 and fits["l2"].eps_range == (0.05, 0.2)
    assert fit_all(samples, exclude_largest=False)["l2"].n_points == 4
    assert fit_all(samples[:2])["h1"].startswith("degenerate")


def test_self_convergence_orders():
    plan = small(grid={"M": 512}, ladder=[0.5], T=0.05, dt=2.5e-3)
    rep = run_self_convergence(plan, levels=4)
    assert np.all(np.abs(np.array(rep.orders["scaled"]) - 2) < 0.2)
    assert min(rep.orders["point"]) >= 1.5
    assert rep.ok


def test_self_convergence_free_is_saturated():
    plan = small(grid={"M": 512}, ladder=[0.5], T=0.05, dt=2.5e-3,
                 defects=[{"y": 0.0, "mu": 0.5, "potential": {"kind": "zero"}}])
    rep = run_self_convergence(plan, levels=3)
    assert rep.orders == {"scaled": "saturated", "point": "saturated"}
    assert rep.ok


def test_domain_zero_data_passes():
    plan = small(psi0={"kind": "zero"}, ladder=[0.125])
    rep = validate_domain(plan)
    assert rep.passed and all(v == 0 for v in rep.changes.values())


def test_domain_too_small_flagged():
    # the Gaussian spreads across a box of half-width 1.5 within T
    plan = small(grid={"L": 1.5, "M": 256}, ladder=[0.125], T=0.5, dt=5e-3)
    rep = validate_domain(plan)
    assert not rep.passed and "increase L" in rep.message


def test_domain_ok_for_short_time():
    plan = small(grid={"L": 8.0, "M": 1024}, ladder=[0.125], T=0.05)
    rep = validate_domain(plan)
    assert rep.passed, rep.message
