"""Command-line entry point.

Exit codes: 0 success, 2 configuration or usage error, 3 solver failure
(blow-up guard, fixed-point non-convergence). Errors are also reported as
one JSON object on standard error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, plotting
from .config import DEFAULTS, _merge, apply_overrides, dump_config, load_config
from .core import ConfigError
from .harness import CANONICAL, plan_from_config, run_convergence_experiment, run_self_convergence, validate_domain
from .point import ConvergenceError, run_point
from .scaled import BlowUpError, SolverError, run_scaled
from .selftest import run_self_test

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

COMMANDS = ("run-scaled", "run-point", "converge", "self-test", "validate-domain", "self-converge")


class _Parser(argparse.ArgumentParser):
    # argparse calls sys.exit on bad usage; turn that into an exception
    def error(self, message):
        raise _UsageError(message, self.format_usage() + f"{self.prog}: error: {message}\n")


class _UsageError(Exception):
    def __init__(self, message, text):
        super().__init__(message)
        self.text = text


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pointnls", description="Scaled and point-concentrated nonlinear Schrodinger solvers.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", type=Path, help="YAML/JSON problem file (default: built-in canonical problem)")
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--T", type=float, dest="T")
        sp.add_argument("--out", type=str)
        sp.add_argument("--allow-inadmissible", action="store_true",
                        help="run outside the admissible range of powers (exploratory)")
        return sp

    common(sub.add_parser("run-scaled", help="one scaled run at a single epsilon")).add_argument(
        "--no-plots", action="store_true")
    common(sub.add_parser("run-point", help="one run of the limit problem")).add_argument(
        "--no-plots", action="store_true")
    conv = common(sub.add_parser("converge", help="epsilon ladder against the limit run"))
    conv.add_argument("--serial", action="store_true", help="run the ladder sequentially")
    conv.add_argument("--workers", type=int)
    conv.add_argument("--no-plots", action="store_true")
    sub.add_parser("self-test", help="fast checks of every module")
    vd = common(sub.add_parser("validate-domain", help="repeat the smallest epsilon with L doubled"))
    vd.add_argument("--tol", type=float, default=0.01)
    sc = common(sub.add_parser("self-converge", help="observed orders under dt halving"))
    sc.add_argument("--levels", type=int, default=4)
    sc.add_argument("--no-plots", action="store_true")
    return p


def _emit_error(stream, kind: str, exc: Exception, **extra) -> None:
    rec = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    rec.update({k: v for k, v in extra.items() if v is not None})
    stream.write(json.dumps(rec) + "\n")
    stream.flush()


def _resolved(args) -> dict:
    cfg = load_config(args.config) if args.config else json.loads(json.dumps(CANONICAL))
    cfg = _merge(DEFAULTS, cfg)
    cfg = apply_overrides(cfg, epsilon=args.epsilon, dt=args.dt, T=args.T, out=args.out)
    if args.allow_inadmissible:
        cfg["allow_inadmissible"] = True
    return cfg


def _single_epsilon(cfg: dict) -> float:
    if cfg.get("epsilon") is not None:
        return float(cfg["epsilon"])
    if cfg.get("ladder"):
        return float(min(cfg["ladder"]))
    raise ConfigError("no epsilon given (use --epsilon or set epsilon in the config)")


def _cmd_run_scaled(args, cfg, out):
    eps = _single_epsilon(cfg)
    cfg = dict(cfg, epsilon=eps, ladder=[eps])
    plan = plan_from_config(cfg, cfg["out"])
    traj = run_scaled(plan.scaled_problem(eps), plan.output_times, plan.guard_factor)
    d = plan.out_dir
    dump_config(cfg, d / "resolved_config.yaml")
    io.write_scaled_csv(traj, d / "trajectory.csv")
    io.write_snapshots(traj.snapshots, d / "snapshots")
    if not args.no_plots:
        plotting.plot_conservation(traj.step_times, {"mass": traj.mass, "energy": traj.energy},
                                   d / "conservation.png", f"scaled run, eps={eps:g}")
        plotting.plot_snapshot(traj.snapshots[-1], d / "final.png")
    m = np.max(np.abs(traj.mass - traj.mass[0])) / traj.mass[0] if traj.mass[0] else 0.0
    e = np.max(np.abs(traj.energy - traj.energy[0])) / abs(traj.energy[0]) if traj.energy[0] else 0.0
    out.write(f"run-scaled eps={eps:g}: {traj.step_times.size - 1} steps, relative mass drift {m:.3e}, "
              f"relative energy drift {e:.3e}; results in {d}\n")


def _cmd_run_point(args, cfg, out):
    if not cfg.get("ladder") and cfg.get("epsilon") is None:
        cfg = dict(cfg, ladder=[1.0])  # no scaled run, any epsilon satisfies the plan checks
    plan = plan_from_config(cfg, cfg["out"])
    traj = run_point(plan.point_problem(), plan.output_times, theta=plan.theta, tol=plan.tol,
                     max_iter=plan.max_iter)
    d = plan.out_dir
    dump_config(cfg, d / "resolved_config.yaml")
    io.write_charges_csv(traj, d / "charges.csv")
    io.write_point_summary_csv(traj, d / "summary.csv")
    io.write_snapshots(traj.snapshots, d / "snapshots")
    if not args.no_plots:
        plotting.plot_conservation(traj.output_times, {"mass": traj.mass, "energy": traj.energy},
                                   d / "conservation.png", "limit run")
        plotting.plot_snapshot(traj.snapshots[-1], d / "final.png")
    out.write(f"run-point: {traj.charges.nsteps} steps, mass drift {np.ptp(traj.mass):.3e}, "
              f"energy drift {np.ptp(traj.energy):.3e}, final jump residual "
              f"{np.nanmax(traj.jump[-1]) if traj.jump.size else 0.0:.3e}; results in {d}\n")


def _cmd_converge(args, cfg, out):
    plan = plan_from_config(cfg, cfg["out"])
    res = run_convergence_experiment(plan, parallel=not args.serial, workers=args.workers, plots=not args.no_plots)
    out.write(res.report)
    out.write(f"results in {res.out_dir}\n")


def _cmd_validate_domain(args, cfg, out):
    plan = plan_from_config(cfg, cfg["out"])
    rep = validate_domain(plan, tol=args.tol)
    out.write(rep.message + "\n")
    d = plan.out_dir
    d.mkdir(parents=True, exist_ok=True)
    (d / "domain.txt").write_text(rep.message + "\n" + json.dumps(rep.changes) + "\n")
    return EXIT_OK if rep.passed else 1


def _cmd_self_converge(args, cfg, out):
    plan = plan_from_config(cfg, cfg["out"])
    rep = run_self_convergence(plan, levels=args.levels, epsilon=cfg.get("epsilon"))
    out.write(rep.text)
    d = plan.out_dir
    d.mkdir(parents=True, exist_ok=True)
    (d / "self_convergence.txt").write_text(rep.text)
    if not args.no_plots:
        plotting.plot_orders(rep.dts[:-1], rep.differences, d / "self_convergence.png")
    return EXIT_OK if rep.ok else 1


def _cmd_self_test(out):
    results = run_self_test()
    for r in results:
        out.write(f"{'PASS' if r.ok else 'FAIL'} {r.module}: {r.name}" + (f" ({r.detail})" if r.detail else "") + "\n")
    failed = sum(not r.ok for r in results)
    out.write(f"{len(results) - failed}/{len(results)} checks passed\n")
    return EXIT_OK if failed == 0 else 1


def main(argv=None, stdout=None, stderr=None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        err.write(exc.text)
        _emit_error(err, "usage", exc)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        err.write(parser.format_usage())
        _emit_error(err, "usage", ConfigError("no subcommand given"))
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=err)
    try:
        if args.command == "self-test":
            return _cmd_self_test(out)
        cfg = _resolved(args)
        handler = {"run-scaled": _cmd_run_scaled, "run-point": _cmd_run_point, "converge": _cmd_converge,
                   "validate-domain": _cmd_validate_domain, "self-converge": _cmd_self_converge}[args.command]
        code = handler(args, cfg, out)
        return EXIT_OK if code is None else code
    except ConfigError as exc:
        _emit_error(err, "config", exc)
        return EXIT_CONFIG
    except BlowUpError as exc:
        _emit_error(err, "solver", exc, t=exc.t, h1=exc.h1)
        return EXIT_SOLVER
    except ConvergenceError as exc:
        _emit_error(err, "solver", exc, step=exc.step, residual=exc.residual)
        return EXIT_SOLVER
    except SolverError as exc:
        _emit_error(err, "solver", exc, epsilon=getattr(exc, "epsilon", None))
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
