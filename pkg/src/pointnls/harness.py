"""Experiments: epsilon ladders, self-convergence in dt, domain-size check."""
from __future__ import annotations

import logging
import os
import pickle
from concurrent.futures import BrokenExecutor, ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io, plotting
from .config import DEFAULTS, _merge, build_defects, build_grid, dump_config, initial_values, validate_config
from .core import ComplexField, ConfigError, Grid1D, PointProblem, ScaledProblem
from .diagnostics import DegenerateFitError, ErrorSample, compare, fit_rate, observed_orders
from .point import PointTrajectory, run_point, solve_charges
from .scaled import SolverError, run_scaled

log = logging.getLogger(__name__)

# Below this every error is treated as roundoff and no rate is fitted.
ROUNDOFF = 1e-12

CANONICAL = {
    "grid": {"L": 16.0, "M": 16384},
    "defects": [{"y": 0.0, "mu": 0.5, "potential": {"kind": "gaussian", "params": {"alpha": 1.0, "width": 1.0}}}],
    "psi0": {"kind": "gaussian", "params": {"amplitude": 1.0, "width": 1.0}},
    "T": 0.5,
    "dt": 6.25e-5,
    "ladder": [0.2, 0.1, 0.05, 0.025],
    "outputs": 64,
}

TWO_DEFECT = _merge(CANONICAL, {
    "defects": [
        {"y": -1.0, "mu": 0.5, "potential": {"kind": "gaussian", "params": {"alpha": 1.0, "width": 1.0}}},
        {"y": 1.0, "mu": 0.5, "potential": {"kind": "gaussian", "params": {"alpha": -1.0, "width": 1.0}}},
    ],
})


class ExperimentError(SolverError):
    def __init__(self, epsilon, cause: Exception):
        self.epsilon, self.cause = epsilon, cause
        what = "limit problem" if epsilon is None else f"epsilon={epsilon:g}"
        super().__init__(f"{what} failed: {cause}")


@dataclass(frozen=True)
class ExperimentPlan:
    grid: Grid1D
    defects: tuple
    psi0_kind: str
    psi0_params: dict
    T: float
    dt: float
    ladder: tuple
    outputs: int = 64
    out_dir: Path | None = None
    theta: float = 0.5
    tol: float = 1e-12
    max_iter: int = 200
    guard_factor: float = 1000.0
    allow_inadmissible: bool = False
    fit_exclude_largest: bool = True
    config: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "defects", tuple(self.defects))
        object.__setattr__(self, "ladder", tuple(float(e) for e in self.ladder))
        lad = np.array(self.ladder)
        if lad.size == 0:
            raise ConfigError("the epsilon ladder is empty")
        if np.any(lad <= 0) or np.any(np.diff(lad) >= 0):
            raise ConfigError(f"ladder must be positive and strictly decreasing, got {list(self.ladder)}")
        if self.grid.h > lad.min() / 8 * (1 + 1e-12):
            raise ConfigError(f"resolution rule violated: h={self.grid.h:g} > min(epsilon)/8={lad.min() / 8:g}; "
                              "increase M")
        if self.outputs < 1:
            raise ConfigError("need at least one output time")

    @cached_property
    def psi0(self) -> ComplexField:
        return ComplexField(self.grid, initial_values(self.psi0_kind, self.psi0_params, self.grid.x), 0.0)

    @property
    def nsteps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def output_steps(self) -> np.ndarray:
        n = self.nsteps
        steps = np.unique(np.rint(np.linspace(0, n, self.outputs + 1)[1:]).astype(int))
        return steps[steps > 0]

    @property
    def output_times(self) -> np.ndarray:
        return self.dt * self.output_steps

    def point_problem(self, dt: float | None = None) -> PointProblem:
        return PointProblem.from_defects(self.defects, self.psi0, self.T, dt or self.dt, self.allow_inadmissible)

    def scaled_problem(self, epsilon: float, dt: float | None = None) -> ScaledProblem:
        return ScaledProblem(self.defects, epsilon, self.psi0, self.T, dt or self.dt, self.allow_inadmissible)

    def with_domain(self, L: float, M: int) -> "ExperimentPlan":
        cfg = _merge(self.config, {"grid": {"L": L, "M": M}}) if self.config else {}
        return replace(self, grid=Grid1D(L, M), config=cfg)


def plan_from_config(cfg: dict, out_dir=None) -> ExperimentPlan:
    cfg = _merge(DEFAULTS, cfg)
    validate_config(cfg)
    if "ladder" in cfg:
        ladder = cfg["ladder"]
    elif cfg.get("epsilon") is not None:
        ladder = [cfg["epsilon"]]
    else:
        raise ConfigError("config needs an epsilon ladder or a single epsilon")
    s = cfg["solver"]
    return ExperimentPlan(
        grid=build_grid(cfg), defects=tuple(build_defects(cfg)),
        psi0_kind=cfg["psi0"]["kind"], psi0_params=dict(cfg["psi0"].get("params") or {}),
        T=float(cfg["T"]), dt=float(cfg["dt"]), ladder=tuple(ladder), outputs=int(cfg["outputs"]),
        out_dir=Path(out_dir if out_dir is not None else cfg["out"]),
        theta=float(s.get("theta", 0.5)), tol=float(s.get("tol", 1e-12)),
        max_iter=int(s.get("max_iter", 200)), guard_factor=float(s.get("guard_factor", 1000.0)),
        allow_inadmissible=bool(cfg["allow_inadmissible"]),
        fit_exclude_largest=bool(cfg["fit_exclude_largest"]), config=cfg)


def canonical_plan(out_dir=None) -> ExperimentPlan:
    return plan_from_config(CANONICAL, out_dir)


# --------------------------------------------------------------------------
# epsilon ladders

def _scaled_job(problem: ScaledProblem, times, guard):
    return run_scaled(problem, times, guard)


def _run_ladder(plan: ExperimentPlan, parallel: bool, workers: int | None):
    times = plan.output_times
    problems = [plan.scaled_problem(e) for e in plan.ladder]
    workers = workers or min(len(problems), os.cpu_count() or 1)
    if parallel and len(problems) > 1 and workers > 1:
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futs = [pool.submit(_scaled_job, p, times, plan.guard_factor) for p in problems]
                out = []
                for e, f in zip(plan.ladder, futs):
                    try:
                        out.append(f.result())
                    except SolverError as exc:
                        raise ExperimentError(e, exc) from exc
                return out
        except (BrokenExecutor, OSError, pickle.PicklingError) as exc:
            log.warning("process pool unavailable (%s); running the ladder sequentially", exc)
    out = []
    for e, p in zip(plan.ladder, problems):
        try:
            out.append(_scaled_job(p, times, plan.guard_factor))
        except SolverError as exc:
            raise ExperimentError(e, exc) from exc
    return out


def fit_all(samples: Sequence[ErrorSample], exclude_largest: bool = True) -> dict:
    """Rate fits per norm; a fit that cannot be made is replaced by a note."""
    use = list(samples)
    if exclude_largest and len(use) >= 4:
        use = sorted(use, key=lambda s: -s.epsilon)[1:]
    fits = {}
    for which in ("pointwise", "l2", "h1"):
        errs = [s.get(which) for s in use]
        if len(use) < 3:
            fits[which] = f"degenerate: {len(use)} ladder points, need 3"
        elif max(errs) < ROUNDOFF:
            fits[which] = "degenerate: errors at roundoff level"
        else:
            try:
                fits[which] = fit_rate(use, which)
            except DegenerateFitError as exc:
                fits[which] = f"degenerate: {exc}"
    return fits


@dataclass
class ConvergenceResult:
    samples: list
    fits: dict
    point: PointTrajectory
    scaled: list
    lattice_change: dict
    report: str
    out_dir: Path | None = None


def _lattice_change(scaled, point) -> dict:
    # sup over every other output time against sup over all of them
    worst = {"l2": 0.0, "h1": 0.0}
    for s in scaled:
        full = compare(s, point)
        coarse = compare(s, point, lattice=s.output_steps[1::2])
        for which in worst:
            a, b = full.get(which), coarse.get(which)
            if a > ROUNDOFF:
                worst[which] = max(worst[which], abs(a - b) / a)
    return worst


def _format_report(plan, samples, fits, lattice, point, scaled) -> str:
    lines = ["convergence experiment",
             f"grid L={plan.grid.L:g} M={plan.grid.M} h={plan.grid.h:g}; T={plan.T:g} dt={plan.dt:g}; "
             f"{len(plan.output_steps)} output times",
             "defects: " + ", ".join(f"y={d.y:g} alpha={d.profile.alpha:.6g} mu={d.mu:g}" for d in plan.defects),
             "", f"{'epsilon':>10} {'pointwise':>12} {'l2':>12} {'h1':>12}"]
    for s in samples:
        lines.append(f"{s.epsilon:>10g} {s.pointwise:>12.5e} {s.l2:>12.5e} {s.h1:>12.5e}")
    lines.append("")
    for which, fit in fits.items():
        lines.append(f"{which}: {fit}" if isinstance(fit, str) else fit.summary())
    lines.append("")
    lines.append("lattice refinement: relative change of sup errors when half the output times are dropped: "
                 + ", ".join(f"{k}={v:.3%}" for k, v in lattice.items()))
    h1max = [float(s.h1.max()) for s in scaled]
    if h1max:
        spread = (max(h1max) - min(h1max)) / min(h1max) if min(h1max) > 0 else 0.0
        lines.append(f"max H1 norm per epsilon: {', '.join(f'{v:.6g}' for v in h1max)} (spread {spread:.3%})")
    lines.append(f"limit run: mass drift {float(np.ptp(point.mass)):.3e}, energy drift {float(np.ptp(point.energy)):.3e}")
    if point.jump.size and np.all(np.isfinite(point.jump[-1])):
        lines.append("final jump residual per site: " + ", ".join(f"{v:.3e}" for v in point.jump[-1]))
    return "\n".join(lines) + "\n"


def write_results(result: ConvergenceResult, plan: ExperimentPlan, out_dir, plots: bool = True) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if plan.config:
        dump_config(plan.config, out / "resolved_config.yaml")
    io.write_ladder_csv(result.samples, out / "ladder.csv")
    io.write_fits_csv(result.fits, out / "fits.csv")
    (out / "report.txt").write_text(result.report)
    io.write_charges_csv(result.point, out / "point_charges.csv")
    io.write_point_summary_csv(result.point, out / "point_summary.csv")
    io.write_snapshot(result.point.snapshots[-1], out / "snapshots" / "point_final.bin")
    for s in result.scaled:
        io.write_scaled_csv(s, out / f"scaled_eps{s.epsilon:g}.csv")
        io.write_snapshot(s.snapshots[-1], out / "snapshots" / f"scaled_eps{s.epsilon:g}_final.bin")
    if plots:
        plotting.plot_ladder(result.samples, result.fits, out / "ladder.png")
        plotting.plot_traces(result.scaled, result.point, out / "traces.png")
        series = {f"energy eps={s.epsilon:g}": s.energy for s in result.scaled}
        plotting.plot_conservation(result.scaled[0].step_times, series, out / "scaled_energy.png",
                                   "energy drift of the scaled runs")
        plotting.plot_conservation(result.point.output_times, {"mass": result.point.mass,
                                                               "energy": result.point.energy},
                                   out / "point_conservation.png", "limit run")
    return out


def run_convergence_experiment(plan: ExperimentPlan, parallel: bool = True, workers: int | None = None,
                               write: bool = True, plots: bool = True) -> ConvergenceResult:
    """Limit run once, scaled run per epsilon, error ladder and rate fits."""
    try:
        point = run_point(plan.point_problem(), plan.output_times, theta=plan.theta, tol=plan.tol,
                          max_iter=plan.max_iter)
    except SolverError as exc:
        raise ExperimentError(None, exc) from exc
    scaled = _run_ladder(plan, parallel, workers)
    samples = [compare(s, point) for s in scaled]
    fits = fit_all(samples, plan.fit_exclude_largest)
    lattice = _lattice_change(scaled, point)
    report = _format_report(plan, samples, fits, lattice, point, scaled)
    result = ConvergenceResult(samples, fits, point, scaled, lattice, report)
    if write and plan.out_dir is not None:
        result.out_dir = write_results(result, plan, plan.out_dir, plots)
    return result


# --------------------------------------------------------------------------
# self-convergence

@dataclass
class SelfConvergenceReport:
    dts: list
    differences: dict  # solver -> successive max trace differences
    orders: dict  # solver -> observed orders, or "saturated"
    thresholds: dict
    flagged: list
    epsilon: float
    text: str = ""

    @property
    def ok(self) -> bool:
        return not self.flagged


def _successive(traces: list, factor: int = 2) -> list[float]:
    # level i+1 has twice the steps of level i; compare on the coarse lattice
    out = []
    for i in range(len(traces) - 1):
        fine = traces[i + 1][:, ::factor]
        out.append(float(np.max(np.abs(traces[i] - fine))) if fine.size else 0.0)
    return out


def run_self_convergence(plan: ExperimentPlan, levels: int = 4, epsilon: float | None = None,
                         solvers: Sequence[str] = ("scaled", "point"),
                         thresholds: dict | None = None) -> SelfConvergenceReport:
    """Halve dt ``levels - 1`` times and report observed orders of the site traces.

    The grid stays fixed: both solvers are spectral in space and the
    defect profiles must keep their sampling. The scaled solver runs at the
    largest epsilon of the ladder unless ``epsilon`` is given.
    """
    thresholds = thresholds or {"scaled": 1.8, "point": 1.3}
    eps = float(epsilon if epsilon is not None else plan.ladder[0])
    dts = [plan.dt / 2 ** i for i in range(levels)]
    diffs, orders, flagged = {}, {}, []
    for solver in solvers:
        traces = []
        for dt in dts:
            if solver == "scaled":
                traces.append(run_scaled(plan.scaled_problem(eps, dt), [plan.T], plan.guard_factor).traces)
            elif solver == "point":
                traces.append(solve_charges(plan.point_problem(dt), plan.theta, plan.tol, plan.max_iter).traces)
            else:
                raise ValueError(f"unknown solver {solver!r}")
        d = _successive(traces)
        diffs[solver] = d
        if len(d) < 2 or max(d) < ROUNDOFF:
            orders[solver] = "saturated"
            continue
        orders[solver] = observed_orders(d)
        if min(orders[solver]) < thresholds[solver]:
            flagged.append(solver)
    lines = [f"self-convergence, dt = {', '.join(f'{v:g}' for v in dts)}"]
    for s in solvers:
        o = orders[s]
        o_txt = o if isinstance(o, str) else ", ".join(f"{v:.3f}" for v in o)
        flag = "  BELOW THRESHOLD" if s in flagged else ""
        lines.append(f"{s}: differences {', '.join(f'{v:.3e}' for v in diffs[s])}; orders {o_txt} "
                     f"(threshold {thresholds[s]}){flag}")
    if "scaled" in solvers:
        lines.append(f"scaled runs at epsilon={eps:g}")
    return SelfConvergenceReport(dts, diffs, orders, thresholds, flagged, eps, "\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# domain size

@dataclass
class DomainReport:
    epsilon: float
    base: ErrorSample
    doubled: ErrorSample
    changes: dict
    tol: float
    passed: bool
    message: str


def _smallest_sample(plan: ExperimentPlan) -> ErrorSample:
    eps = min(plan.ladder)
    times = plan.output_times
    point = run_point(plan.point_problem(), times, theta=plan.theta, tol=plan.tol, max_iter=plan.max_iter,
                      jump=False, conservation=False)
    scaled = run_scaled(plan.scaled_problem(eps), times, plan.guard_factor)
    return compare(scaled, point)


def validate_domain(plan: ExperimentPlan, tol: float = 0.01) -> DomainReport:
    """Repeat the smallest-epsilon comparison with L doubled at fixed h."""
    eps = min(plan.ladder)
    base = _smallest_sample(plan)
    big = plan.with_domain(2 * plan.grid.L, 2 * plan.grid.M)
    doubled = _smallest_sample(big)
    changes = {}
    for which in ("pointwise", "l2", "h1"):
        a, b = base.get(which), doubled.get(which)
        changes[which] = 0.0 if max(a, b) < ROUNDOFF else abs(b - a) / max(a, ROUNDOFF)
    worst = max(changes.values())
    passed = worst < tol
    if passed:
        msg = f"domain ok: doubling L changes the errors by at most {worst:.3%} (< {tol:.0%})"
    else:
        msg = (f"domain too small: doubling L to {2 * plan.grid.L:g} changes the errors by {worst:.3%} "
               f"(>= {tol:.0%}); increase L (and M with it)")
    return DomainReport(eps, base, doubled, changes, tol, passed, msg)
