"""CSV tables and binary field snapshots.

Snapshot format: one ASCII header line ``t L M`` terminated by a newline,
followed by M complex doubles (little-endian, real and imaginary parts
interleaved).
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ComplexField, ConfigError, Grid1D


def _open(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.open("w", newline="")


def _trace_columns(n_sites: int, prefix: str) -> list[str]:
    cols = []
    for k in range(n_sites):
        cols += [f"{prefix}{k}_re", f"{prefix}{k}_im"]
    return cols


def write_scaled_csv(traj, path) -> None:
    """Columns t, mass, energy, h1_norm, then re/im of the trace at each site."""
    N = traj.traces.shape[0]
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mass", "energy", "h1_norm"] + _trace_columns(N, "trace"))
        for j, t in enumerate(traj.step_times):
            row = [repr(float(t)), repr(float(traj.mass[j])), repr(float(traj.energy[j])), repr(float(traj.h1[j]))]
            for k in range(N):
                z = traj.traces[k, j]
                row += [repr(float(z.real)), repr(float(z.imag))]
            w.writerow(row)


def write_charges_csv(traj, path) -> None:
    """Every step: t, re/im of trace and charge per site, then the jump residual per site.

    Jump residuals are only evaluated at output times; other rows leave them
    empty.
    """
    ch = traj.charges
    N = ch.traces.shape[0]
    jump = {int(s): traj.jump[i] for i, s in enumerate(traj.output_steps)}
    cols = ["t"] + _trace_columns(N, "trace") + _trace_columns(N, "charge") + [f"jump{k}" for k in range(N)]
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for n, t in enumerate(ch.times):
            row = [repr(float(t))]
            for arr in (ch.traces, ch.charges):
                for k in range(N):
                    row += [repr(float(arr[k, n].real)), repr(float(arr[k, n].imag))]
            jr = jump.get(n)
            row += ["" if jr is None or not np.isfinite(jr[k]) else repr(float(jr[k])) for k in range(N)]
            w.writerow(row)


def write_point_summary_csv(traj, path) -> None:
    """Output times with whole-line mass and energy, grid values and jump residuals."""
    N = traj.jump.shape[1] if traj.jump.ndim == 2 else 0
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mass", "energy", "grid_mass", "grid_energy"] + [f"jump{k}" for k in range(N)])
        for i, t in enumerate(traj.output_times):
            row = [repr(float(t)), repr(float(traj.mass[i])), repr(float(traj.energy[i])),
                   repr(float(traj.grid_mass[i])) if traj.grid_mass.size else "",
                   repr(float(traj.grid_energy[i])) if traj.grid_energy.size else ""]
            row += [repr(float(v)) for v in traj.jump[i]]
            w.writerow(row)


def write_snapshot(field: ComplexField, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    g = field.grid
    with path.open("wb") as fh:
        fh.write(f"{field.t!r} {g.L!r} {g.M}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(field.values, dtype="<c16").tobytes())


def read_snapshot(path) -> ComplexField:
    with Path(path).open("rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 3:
            raise ConfigError(f"{path}: bad snapshot header")
        t, L, M = float(header[0]), float(header[1]), int(header[2])
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != M:
        raise ConfigError(f"{path}: expected {M} values, found {data.size}")
    return ComplexField(Grid1D(L, M), data.astype(complex), t)


def write_snapshots(fields: Sequence[ComplexField], directory, stem: str = "psi") -> list[Path]:
    directory = Path(directory)
    paths = []
    for i, f in enumerate(fields):
        p = directory / f"{stem}_{i:03d}.bin"
        write_snapshot(f, p)
        paths.append(p)
    return paths


def write_ladder_csv(samples, path, sites: Sequence[float] = ()) -> None:
    """epsilon, err_pointwise, err_l2, err_h1, then the pointwise error per site."""
    n_sites = max((len(s.pointwise_per_site) for s in samples), default=0)
    with _open(path) as fh:
        w = csv.writer(fh)
        head = ["epsilon", "err_pointwise", "err_l2", "err_h1"]
        head += [f"err_site{k}" for k in range(n_sites)]
        w.writerow(head)
        for s in samples:
            w.writerow([repr(float(s.epsilon)), repr(s.pointwise), repr(s.l2), repr(s.h1)]
                       + [repr(float(v)) for v in s.pointwise_per_site])


def write_fits_csv(fits: dict, path) -> None:
    """One row per norm; a degenerate fit keeps its note and leaves the numbers empty."""
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["norm", "delta", "prefactor", "residual", "eps_min", "eps_max", "n_points", "note"])
        for which, fit in fits.items():
            if isinstance(fit, str):
                w.writerow([which, "", "", "", "", "", "", fit])
            else:
                w.writerow([which, repr(fit.delta), repr(fit.prefactor), repr(fit.residual),
                            repr(fit.eps_range[0]), repr(fit.eps_range[1]), fit.n_points, ""])


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
