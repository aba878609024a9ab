"""Figures written next to the CSV outputs. Uses the non-interactive Agg backend."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_ladder(samples, fits, path):
    """Log-log errors against epsilon with the fitted power laws."""
    eps = np.array([s.epsilon for s in samples])
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for which, marker in (("pointwise", "o"), ("l2", "s"), ("h1", "^")):
        err = np.array([s.get(which) for s in samples])
        if not np.all(err > 0):
            continue
        ax.loglog(eps, err, marker=marker, label=which)
        fit = fits.get(which)
        if fit is not None and not isinstance(fit, str):
            e = np.linspace(fit.eps_range[0], fit.eps_range[1], 20)
            ax.loglog(e, fit.prefactor * e ** fit.delta, "--", color=ax.lines[-1].get_color(),
                      label=f"{which} fit, delta={fit.delta:.2f}")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("sup-in-time error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def plot_traces(scaled_runs, point_run, path):
    """|psi(t, y_k)| for each scaled run against the limit trace."""
    sites = point_run.charges.sites
    fig, axes = plt.subplots(len(sites), 1, figsize=(6, 2.6 * max(1, len(sites))), squeeze=False)
    t = point_run.charges.times
    for k, ax in enumerate(axes[:, 0]):
        for run in scaled_runs:
            ax.plot(run.step_times, np.abs(run.traces[k]), lw=0.9, label=f"eps={run.epsilon:g}")
        ax.plot(t, np.abs(point_run.charges.traces[k]), "k--", lw=1.2, label="limit")
        ax.set_ylabel(f"|psi(t, {sites[k]:g})|")
        ax.legend(fontsize=7)
    axes[-1, 0].set_xlabel("t")
    return _save(fig, path)


def plot_conservation(times, series: dict, path, title: str = ""):
    """Relative drift of each named series from its initial value."""
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for name, vals in series.items():
        vals = np.asarray(vals, dtype=float)
        scale = abs(vals[0]) if vals.size and vals[0] != 0 else 1.0
        ax.semilogy(times, np.abs(vals - vals[0]) / scale + 1e-18, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("relative drift")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_snapshot(field, path, other=None, labels=("psi", "reference")):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(field.grid.x, np.abs(field.values), label=labels[0])
    if other is not None:
        ax.plot(other.grid.x, np.abs(other.values), "--", label=labels[1])
    ax.set_xlabel("x")
    ax.set_ylabel(f"|psi(t={field.t:g}, x)|")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_orders(levels, errors: dict, path):
    """Self-convergence differences against dt."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, err in errors.items():
        err = np.asarray(err, dtype=float)
        ok = err > 0
        if np.any(ok):
            ax.loglog(np.asarray(levels)[ok], err[ok], "o-", label=name)
    ax.set_xlabel("dt")
    ax.set_ylabel("difference to next level")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)
