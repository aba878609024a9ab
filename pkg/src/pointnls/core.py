"""Grids, fields, potential profiles and problem definitions.

Everything here is immutable after construction. Arrays handed out by these
types are marked read-only so they can be shared between workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid


class ConfigError(ValueError):
    """Invalid problem definition (bad grid, bad profile, bad parameters)."""


class AdmissibilityError(ConfigError):
    """Defect powers outside the range with a guaranteed global solution."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on [-L, L) with M nodes."""

    L: float
    M: int

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ConfigError(f"grid half width must be positive, got L={self.L}")
        if int(self.M) != self.M or self.M < 2 or not _is_power_of_two(int(self.M)):
            raise ConfigError(f"grid size must be a power of two >= 2, got M={self.M}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.M

    @cached_property
    def x(self) -> np.ndarray:
        return _frozen(-self.L + self.h * np.arange(self.M))

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in numpy FFT order."""
        return _frozen(2.0 * np.pi * np.fft.fftfreq(self.M, d=self.h))

    @cached_property
    def k_deriv(self) -> np.ndarray:
        # Nyquist mode dropped for the odd (first-derivative) symbol.
        k = self.k.copy()
        k[self.M // 2] = 0.0
        return _frozen(k)

    def index_of(self, y: float, rtol: float = 1e-9) -> int:
        """Index of the node at coordinate ``y``; raises if ``y`` is not a node."""
        s = (y + self.L) / self.h
        m = int(round(s))
        if abs(s - m) > rtol * max(1.0, abs(s)) or not 0 <= m < self.M:
            raise ConfigError(f"y={y} is not a node of the grid (L={self.L}, M={self.M})")
        return m

    def with_size(self, L: float, M: int) -> "Grid1D":
        return Grid1D(L, M)


def make_grid(L: float, M: int) -> Grid1D:
    return Grid1D(L, M)


def spectral_derivative(values: np.ndarray, grid: Grid1D) -> np.ndarray:
    return np.fft.ifft(1j * grid.k_deriv * np.fft.fft(values))


@dataclass(frozen=True)
class ComplexField:
    grid: Grid1D
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != (self.grid.M,):
            raise ConfigError(f"field has {v.shape} samples, grid has {self.grid.M} nodes")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "t", float(self.t))

    def norm(self) -> float:
        return float(np.sqrt(self.grid.h * np.sum(np.abs(self.values) ** 2)))

    def mass(self) -> float:
        return float(self.grid.h * np.sum(np.abs(self.values) ** 2))

    def at(self, y: float) -> complex:
        return complex(self.values[self.grid.index_of(y)])

    def derivative(self) -> np.ndarray:
        return spectral_derivative(self.values, self.grid)

    def replace(self, values=None, t=None) -> "ComplexField":
        return ComplexField(self.grid,
                            self.values if values is None else values,
                            self.t if t is None else t)


def nonlinear_charge(z, mu):
    """|z|^(2 mu) z with the convention 0^(2 mu) = 0 (and |z|^0 = 1 for mu = 0)."""
    z = np.asarray(z, dtype=complex)
    if mu == 0:
        return z.copy()
    a = np.abs(z)
    # overflow is left to the callers, which check for non-finite values
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        p = np.where(a > 0, a ** (2.0 * mu), 0.0)
        return p * z


# --------------------------------------------------------------------------
# potential profiles

_PROFILE_KINDS = ("gaussian", "box", "double_well", "samples", "zero")


@dataclass(frozen=True)
class PotentialProfile:
    """A concentration profile V, either closed form or tabulated.

    Closed forms:

    * ``gaussian``: ``amplitude * exp(-((x - center) / width)**2)``; giving
      ``alpha`` instead of ``amplitude`` normalises the integral to ``alpha``.
    * ``box``: ``height`` on ``[-width/2, width/2]``.
    * ``double_well``: ``amplitude * (g(x - d) - depth * g(x) + g(x + d))``
      with ``g`` a unit Gaussian of the given ``width``. ``depth`` defaults
      to 0 (two bumps); a positive ``depth`` gives a sign-changing profile.
    * ``samples``: values ``v`` at coordinates ``x``, linear in between and
      zero outside.
    """

    kind: str
    params: dict = field(default_factory=dict)
    resolution: int = 512

    def __post_init__(self):
        if self.kind not in _PROFILE_KINDS:
            raise ConfigError(f"unknown potential kind {self.kind!r}; expected one of {_PROFILE_KINDS}")
        p = dict(self.params)
        if self.kind == "samples":
            x = np.asarray(p.get("x"), dtype=float)
            v = np.asarray(p.get("v"), dtype=float)
            if x.ndim != 1 or x.shape != v.shape or x.size < 2:
                raise ConfigError("sampled profile needs matching 1-d arrays 'x' and 'v'")
            if np.any(np.diff(x) <= 0):
                raise ConfigError("sampled profile coordinates must increase")
            p["x"], p["v"] = _frozen(x.copy()), _frozen(v.copy())
        elif self.kind == "gaussian":
            w = float(p.get("width", 1.0))
            if w <= 0:
                raise ConfigError("gaussian width must be positive")
            if "alpha" in p:
                p["amplitude"] = float(p.pop("alpha")) / (w * math.sqrt(math.pi))
            p.setdefault("amplitude", 1.0)
            p.setdefault("center", 0.0)
            p["width"] = w
        elif self.kind == "box":
            p.setdefault("height", 1.0)
            p.setdefault("width", 1.0)
            if p["width"] <= 0:
                raise ConfigError("box width must be positive")
        elif self.kind == "double_well":
            p.setdefault("amplitude", 1.0)
            p.setdefault("width", 0.5)
            p.setdefault("separation", 1.0)
            p.setdefault("depth", 0.0)
        object.__setattr__(self, "params", p)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "gaussian":
            return p["amplitude"] * np.exp(-(((x - p["center"]) / p["width"]) ** 2))
        if self.kind == "box":
            return np.where(np.abs(x) <= 0.5 * p["width"], float(p["height"]), 0.0)
        if self.kind == "double_well":
            g = lambda s: np.exp(-((s / p["width"]) ** 2))  # noqa: E731
            d = p["separation"]
            return p["amplitude"] * (g(x - d) - p["depth"] * g(x) + g(x + d))
        return np.interp(x, p["x"], p["v"], left=0.0, right=0.0)

    @property
    def extent(self) -> tuple[float, float]:
        """Interval outside which the profile is zero to double precision."""
        p = self.params
        if self.kind == "gaussian":
            r = 7.0 * p["width"]  # exp(-49) ~ 5e-22
            return p["center"] - r, p["center"] + r
        if self.kind == "box":
            return -0.5 * p["width"], 0.5 * p["width"]
        if self.kind == "double_well":
            r = abs(p["separation"]) + 7.0 * p["width"]
            return -r, r
        if self.kind == "samples":
            return float(p["x"][0]), float(p["x"][-1])
        return -1.0, 1.0

    def sample(self) -> tuple[np.ndarray, np.ndarray]:
        """Reference samples used for quadrature.

        Closed forms are sampled on a uniform grid over ``extent`` with a node
        at 0, so kinks of ``|x| V`` and box edges fall on nodes.
        """
        if self.kind == "samples":
            return self.params["x"], self.params["v"]
        a, b = self.extent
        n = int(self.resolution)
        h = max(abs(a), abs(b)) / n
        x = h * np.arange(int(np.floor(a / h)), int(np.ceil(b / h)) + 1)
        return x, self(x)

    @cached_property
    def moments(self) -> tuple[float, float]:
        return potential_moments(self)

    @property
    def alpha(self) -> float:
        return self.moments[0]

    @property
    def abs_first_moment(self) -> float:
        return self.moments[1]

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.sample()[1])))

    @property
    def has_negative_part(self) -> bool:
        return bool(np.min(self.sample()[1]) < 0.0)

    def with_resolution(self, n: int) -> "PotentialProfile":
        return PotentialProfile(self.kind, dict(self.params), n)


def potential_moments(profile: PotentialProfile) -> tuple[float, float]:
    """Return ``(alpha, abs_first_moment)`` = (int V dx, int |x| |V| dx).

    Composite trapezoid rule on the profile's reference samples.
    """
    x, v = profile.sample()
    if not np.all(np.isfinite(v)) or not np.all(np.isfinite(x)):
        raise ConfigError("potential samples contain NaN or inf")
    alpha = float(trapezoid(v, x))
    first = float(trapezoid(np.abs(x) * np.abs(v), x))
    return alpha, first


# --------------------------------------------------------------------------
# defects and problems

@dataclass(frozen=True)
class DefectSpec:
    y: float
    profile: PotentialProfile
    mu: float

    def __post_init__(self):
        if not self.mu >= 0:
            raise ConfigError(f"defect power mu must be >= 0, got {self.mu}")


def admissibility_violations(powers: Sequence[float], attractive: Sequence[bool]) -> list[str]:
    msgs = []
    for i, (mu, neg) in enumerate(zip(powers, attractive)):
        if mu <= 0:
            msgs.append(f"defect {i}: mu={mu} must be > 0")
        elif neg and not mu < 1:
            msgs.append(f"defect {i}: attractive part requires 0 < mu < 1 for global solutions, got mu={mu}")
    return msgs


def check_scaled_admissibility(defects: Sequence[DefectSpec]) -> None:
    """V_k >= 0 or 0 < mu_k < 1 for every defect."""
    msgs = admissibility_violations(
        [d.mu for d in defects],
        [d.profile.has_negative_part or d.profile.alpha < 0 for d in defects])
    if msgs:
        raise AdmissibilityError("; ".join(msgs))


def check_point_admissibility(alphas: Sequence[float], mus: Sequence[float]) -> None:
    """mu_k in (0, 1) for all k if any alpha_k < 0, else mu_k > 0."""
    any_neg = any(a < 0 for a in alphas)
    msgs = admissibility_violations(mus, [any_neg] * len(mus))
    if msgs:
        raise AdmissibilityError("; ".join(msgs))


def _check_sites(grid: Grid1D, ys: Sequence[float]) -> None:
    if len(set(ys)) != len(ys):
        raise ConfigError(f"defect sites must be distinct, got {list(ys)}")
    for y in ys:
        grid.index_of(y)


def _check_time(T: float, dt: float) -> int:
    if not T > 0 or not dt > 0:
        raise ConfigError(f"need T > 0 and dt > 0, got T={T}, dt={dt}")
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * T:
        raise ConfigError(f"T={T} is not an integer multiple of dt={dt}")
    return n


@dataclass(frozen=True)
class ScaledProblem:
    defects: tuple
    epsilon: float
    psi0: ComplexField
    T: float
    dt: float
    allow_inadmissible: bool = False
    resolution_factor: float = 8.0

    def __post_init__(self):
        object.__setattr__(self, "defects", tuple(self.defects))
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.grid.h > self.epsilon / self.resolution_factor * (1 + 1e-12):
            raise ConfigError(
                f"resolution rule violated: h={self.grid.h:g} > epsilon/{self.resolution_factor:g}"
                f"={self.epsilon / self.resolution_factor:g}; increase M")
        _check_sites(self.grid, [d.y for d in self.defects])
        _check_time(self.T, self.dt)
        if not self.allow_inadmissible:
            check_scaled_admissibility(self.defects)

    @property
    def grid(self) -> Grid1D:
        return self.psi0.grid

    @property
    def nsteps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class PointProblem:
    sites: tuple
    alphas: tuple
    mus: tuple
    psi0: ComplexField
    T: float
    dt: float
    allow_inadmissible: bool = False

    def __post_init__(self):
        for name in ("sites", "alphas", "mus"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not len(self.sites) == len(self.alphas) == len(self.mus):
            raise ConfigError("sites, alphas and mus must have equal length")
        _check_sites(self.grid, self.sites)
        _check_time(self.T, self.dt)
        if not self.allow_inadmissible:
            check_point_admissibility(self.alphas, self.mus)

    @classmethod
    def from_defects(cls, defects: Sequence[DefectSpec], psi0: ComplexField, T: float,
                     dt: float, allow_inadmissible: bool = False) -> "PointProblem":
        # Strengths always come from the profiles, never entered by hand.
        return cls(tuple(d.y for d in defects), tuple(d.profile.alpha for d in defects),
                   tuple(d.mu for d in defects), psi0, T, dt, allow_inadmissible)

    @property
    def grid(self) -> Grid1D:
        return self.psi0.grid

    @property
    def nsteps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class ChargeTrajectory:
    """Traces psi(t_n, y_k) and charges q_k(t_n) on the step lattice t_n = n dt."""

    dt: float
    sites: tuple
    mus: tuple
    traces: np.ndarray  # (N, nsteps + 1)

    def __post_init__(self):
        tr = np.array(self.traces, dtype=complex, ndmin=2)
        object.__setattr__(self, "traces", _frozen(tr))
        q = np.vstack([nonlinear_charge(tr[k], mu) for k, mu in enumerate(self.mus)]) \
            if len(self.mus) else np.zeros_like(tr)
        object.__setattr__(self, "charges", _frozen(q))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.traces.shape[1])

    @property
    def nsteps(self) -> int:
        return self.traces.shape[1] - 1
