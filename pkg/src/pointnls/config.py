"""Problem definitions from YAML or JSON config files.

Schema (all lengths and times in the units of the equation)::

    grid:     {L: 16, M: 16384}
    defects:
      - y: 0.0
        mu: 0.5
        potential: {kind: gaussian, params: {alpha: 1.0, width: 1.0}}
    epsilon:  0.1            # single scaled run (run-scaled)
    ladder:   [0.2, 0.1, 0.05, 0.025]
    T:        0.5
    dt:       6.25e-5
    psi0:     {kind: gaussian, params: {amplitude: 1.0, width: 1.0}}
    outputs:  64             # output times in (0, T]
    solver:   {theta: 0.5, tol: 1.0e-12, max_iter: 200, guard_factor: 1000}
    allow_inadmissible: false
    fit_exclude_largest: true
    out: results

Potential kinds and parameters are those of :class:`PotentialProfile`.
Initial data kinds: ``gaussian`` (amplitude, width, center, k0), ``sech``
(amplitude, width, center, k0), ``plane_wave`` (amplitude, mode) and ``zero``.
"""
from __future__ import annotations

import copy
import json
import re
from pathlib import Path

import numpy as np
import yaml

from .core import ComplexField, ConfigError, DefectSpec, Grid1D, PotentialProfile

DEFAULTS = {
    "T": 0.5,
    "outputs": 64,
    "solver": {"theta": 0.5, "tol": 1e-12, "max_iter": 200, "guard_factor": 1000.0},
    "allow_inadmissible": False,
    "fit_exclude_largest": True,
    "out": "results",
}

# override name -> (config key, type)
OVERRIDES = {"epsilon": ("epsilon", float), "dt": ("dt", float), "T": ("T", float), "out": ("out", str)}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-3`` (no dot) as a float, as JSON does."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_config(text: str) -> dict:
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML/JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at top level")
    cfg = _merge(DEFAULTS, data)
    validate_config(cfg)
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def apply_overrides(cfg: dict, **overrides) -> dict:
    """Copy of ``cfg`` with command-line overrides applied (``None`` means unset)."""
    out = copy.deepcopy(cfg)
    for name, value in overrides.items():
        if value is None:
            continue
        if name not in OVERRIDES:
            raise ConfigError(f"unknown override {name!r}")
        key, typ = OVERRIDES[name]
        try:
            out[key] = typ(value)
        except (TypeError, ValueError):
            raise ConfigError(f"override {name}={value!r} is not a valid {typ.__name__}") from None
    validate_config(out)
    return out


def _require(cfg, key, typ, where="config"):
    if key not in cfg:
        raise ConfigError(f"{where}: missing key {key!r}")
    v = cfg[key]
    if typ is float and isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if typ is int and isinstance(v, int) and not isinstance(v, bool):
        return v
    if typ in (list, dict, str) and isinstance(v, typ):
        return v
    raise ConfigError(f"{where}: {key!r} must be {typ.__name__}, got {type(v).__name__}")


def validate_config(cfg: dict) -> None:
    """Type checks only; value checks happen when the objects are built."""
    grid = _require(cfg, "grid", dict)
    _require(grid, "L", float, "grid")
    _require(grid, "M", int, "grid")
    for i, d in enumerate(_require(cfg, "defects", list)):
        where = f"defects[{i}]"
        if not isinstance(d, dict):
            raise ConfigError(f"{where} must be a mapping")
        _require(d, "y", float, where)
        _require(d, "mu", float, where)
        pot = _require(d, "potential", dict, where)
        _require(pot, "kind", str, where + ".potential")
    _require(cfg, "T", float)
    _require(cfg, "dt", float)
    _require(cfg, "outputs", int)
    if "epsilon" in cfg and cfg["epsilon"] is not None:
        _require(cfg, "epsilon", float)
    if "ladder" in cfg:
        lad = _require(cfg, "ladder", list)
        if not all(isinstance(e, (int, float)) and not isinstance(e, bool) for e in lad):
            raise ConfigError("ladder entries must be numbers")
    psi0 = _require(cfg, "psi0", dict)
    _require(psi0, "kind", str, "psi0")
    solver = _require(cfg, "solver", dict)
    for key, typ in (("theta", float), ("tol", float), ("max_iter", int), ("guard_factor", float)):
        _require(solver, key, typ, "solver")


def build_grid(cfg: dict) -> Grid1D:
    return Grid1D(cfg["grid"]["L"], cfg["grid"]["M"])


def build_defects(cfg: dict) -> list[DefectSpec]:
    out = []
    for d in cfg["defects"]:
        pot = d["potential"]
        params = dict(pot.get("params") or {})
        prof = PotentialProfile(pot["kind"], params, int(pot.get("resolution", 512)))
        out.append(DefectSpec(float(d["y"]), prof, float(d["mu"])))
    return out


def initial_values(kind: str, params: dict, x: np.ndarray) -> np.ndarray:
    p = dict(params or {})
    amp = float(p.get("amplitude", 1.0))
    width = float(p.get("width", 1.0))
    center = float(p.get("center", 0.0))
    k0 = float(p.get("k0", 0.0))
    if kind == "zero":
        return np.zeros(x.shape, dtype=complex)
    if kind == "gaussian":
        return amp * np.exp(-((x - center) / width) ** 2 + 1j * k0 * x)
    if kind == "sech":
        return amp / np.cosh((x - center) / width) * np.exp(1j * k0 * x)
    if kind == "plane_wave":
        L = -x[0]
        return amp * np.exp(1j * np.pi * int(p.get("mode", 1)) * x / L)
    raise ConfigError(f"unknown initial data kind {kind!r}")


def build_psi0(cfg: dict, grid: Grid1D | None = None) -> ComplexField:
    grid = grid or build_grid(cfg)
    return ComplexField(grid, initial_values(cfg["psi0"]["kind"], cfg["psi0"].get("params"), grid.x), 0.0)


def dump_config(cfg: dict, path) -> None:
    """Write the resolved config as YAML (JSON when the suffix is .json)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".json":
        path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    else:
        path.write_text(yaml.safe_dump(cfg, sort_keys=True))
