"""Density profiles on the continuum torus and the log-odds transform.

A profile assigns a density in (0, 1) to every point of [0,1)^d.  Closed
forms ("constant", "cosine") are kept as callables so the same profile can
be sampled on the particle torus and on PDE grids without interpolation
error; explicit grids are supported for CSV input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError


@dataclass
class Profile:
    """Density profile with a lower bound delta0 away from {0, 1}."""

    dimension: int
    func: Optional[Callable] = None
    grid: Optional[np.ndarray] = None  # values on a uniform periodic grid
    delta0: float = 0.0
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.func is None) == (self.grid is None):
            raise ConfigError("profile needs exactly one of func or grid")
        if self.grid is not None:
            self.grid = np.asarray(self.grid, dtype=np.float64)
            if self.grid.ndim != self.dimension:
                raise ConfigError("profile grid dimensionality mismatch")

    def values_at(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at an (n, d) array of torus points."""
        pts = np.mod(np.asarray(points, dtype=np.float64), 1.0)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.shape[1] != self.dimension:
            raise ConfigError("points have wrong dimension")
        if self.func is not None:
            return np.asarray(self.func(pts), dtype=np.float64)
        return _interp_periodic(self.grid, pts)

    def sample_grid(self, m: int) -> np.ndarray:
        """Values on the uniform m^d grid with nodes at multiples of 1/m."""
        axes = np.indices((m,) * self.dimension).reshape(self.dimension, -1).T / m
        return self.values_at(axes).reshape((m,) * self.dimension)

    def bounds(self, m: int = 64) -> tuple:
        g = self.sample_grid(m)
        return float(g.min()), float(g.max())

    @classmethod
    def constant(cls, dimension: int, value: float, delta0: float = 0.0) -> "Profile":
        if not 0.0 <= value <= 1.0:
            raise ConfigError("constant profile value outside [0, 1]")
        return cls(dimension, func=lambda pts: np.full(len(pts), value), delta0=delta0,
                   spec={"kind": "constant", "value": value})

    @classmethod
    def cosine(cls, dimension: int, base: float, amplitude: float, axis: int,
               delta0: float = 0.0) -> "Profile":
        """base + amplitude * cos(2 pi u_axis)."""
        if not 0 <= axis < dimension:
            raise ConfigError("cosine axis outside dimension")
        lo, hi = base - abs(amplitude), base + abs(amplitude)
        if lo < 0.0 or hi > 1.0:
            raise ConfigError("cosine profile leaves [0, 1]")

        def f(pts, _a=axis, _b=base, _amp=amplitude):
            return _b + _amp * np.cos(2.0 * math.pi * pts[:, _a])

        return cls(dimension, func=f, delta0=delta0,
                   spec={"kind": "cosine", "base": base, "amplitude": amplitude,
                         "axis": axis})

    @classmethod
    def from_grid(cls, grid: np.ndarray, delta0: float = 0.0) -> "Profile":
        grid = np.asarray(grid, dtype=np.float64)
        return cls(grid.ndim, grid=grid, delta0=delta0, spec={"kind": "grid"})

    @classmethod
    def from_spec(cls, dimension: int, spec: dict, delta0: float = 0.0) -> "Profile":
        kind = spec.get("kind")
        if kind == "constant":
            return cls.constant(dimension, float(spec["value"]), delta0)
        if kind == "cosine":
            return cls.cosine(dimension, float(spec["base"]), float(spec["amplitude"]),
                              int(spec["axis"]), delta0)
        if kind == "csv":
            return cls.from_grid(load_profile_csv(spec["path"], dimension), delta0)
        raise ConfigError(f"unknown profile kind {kind!r}")


def _interp_periodic(grid: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Multilinear periodic interpolation of a uniform-grid field at points."""
    d = grid.ndim
    m = grid.shape[0]
    x = np.mod(pts, 1.0) * m
    i0 = np.floor(x).astype(np.int64) % m
    frac = x - np.floor(x)
    out = np.zeros(len(pts))
    for corner in range(1 << d):
        idx = []
        weight = np.ones(len(pts))
        for ax in range(d):
            if (corner >> ax) & 1:
                idx.append((i0[:, ax] + 1) % m)
                weight *= frac[:, ax]
            else:
                idx.append(i0[:, ax])
                weight *= 1.0 - frac[:, ax]
        out += weight * grid[tuple(idx)]
    return out


def load_profile_csv(path, dimension: int) -> np.ndarray:
    """Load a grid profile from CSV (flat values, side inferred)."""
    values = np.loadtxt(path, delimiter=",").reshape(-1)
    m = round(len(values) ** (1.0 / dimension))
    if m ** dimension != len(values):
        raise ConfigError("CSV profile length is not a perfect d-th power")
    return values.reshape((m,) * dimension)


def save_profile_csv(path, grid: np.ndarray):
    np.savetxt(path, np.asarray(grid).reshape(1, -1), delimiter=",")


def validate_profile(profile: Profile, drift, delta0: float, tol: float = 1e-10,
                     m: int = 64) -> dict:
    """Drift-constancy and boundedness diagnostics on an m^d evaluation grid.

    Reports max |q . grad rho| (centred differences) and the distance of the
    range from {0, 1}; passes when the former is below tol and the latter at
    least delta0.
    """
    q = np.asarray(drift, dtype=np.float64)
    grid = profile.sample_grid(m)
    h = 1.0 / m
    dirderiv = np.zeros_like(grid)
    for ax in range(profile.dimension):
        if q[ax] == 0.0:
            continue
        dirderiv += q[ax] * (np.roll(grid, -1, axis=ax) - np.roll(grid, 1, axis=ax)) / (2 * h)
    max_violation = float(np.abs(dirderiv).max())
    margin = float(min(grid.min(), 1.0 - grid.max()))
    return {
        "max_drift_derivative": max_violation,
        "distance_to_boundary": margin,
        "drift_constant": max_violation <= tol,
        "bounded_away": margin >= delta0,
        "ok": max_violation <= tol and margin >= delta0,
    }


def project_along_drift(profile: Profile, drift, n_quad: int = 0) -> Profile:
    """Average the profile along the drift line through each point.

    Replaces rho(u) by the mean of rho(u + r q) over r in [0, 1).  The result
    is drift-constant up to quadrature error and the operation is idempotent.
    """
    q = np.asarray(drift, dtype=np.float64)
    if np.allclose(q, 0.0):
        return profile
    if n_quad <= 0:
        # enough nodes to resolve integer windings exactly for trig profiles
        n_quad = max(256, 8 * int(np.ceil(np.abs(q).max())))

    def averaged(pts, _p=profile, _q=q, _n=n_quad):
        rs = (np.arange(_n) + 0.5) / _n
        acc = np.zeros(len(pts))
        for r in rs:
            acc += _p.values_at(pts + r * _q)
        return acc / _n

    return Profile(profile.dimension, func=averaged, delta0=profile.delta0,
                   spec={"kind": "drift_projected", "inner": profile.spec})


def lambda_transform(rho, alpha: float):
    """Log-odds of rho relative to the reference density alpha.

    Strictly increasing in rho; lambda_inverse undoes it to 1e-12.
    """
    rho_arr = np.asarray(rho, dtype=np.float64)
    if not 0.0 < alpha < 1.0:
        raise ConfigError("reference density must be in (0, 1)")
    if np.any(rho_arr <= 0.0) or np.any(rho_arr >= 1.0):
        raise ConfigError("density must be in (0, 1) for the log-odds transform")
    out = np.log(rho_arr * (1.0 - alpha) / (alpha * (1.0 - rho_arr)))
    return float(out) if np.isscalar(rho) else out


def lambda_inverse(lam, alpha: float):
    lam_arr = np.asarray(lam, dtype=np.float64)
    if not 0.0 < alpha < 1.0:
        raise ConfigError("reference density must be in (0, 1)")
    expl = np.exp(lam_arr)
    out = alpha * expl / (1.0 - alpha + alpha * expl)
    return float(out) if np.isscalar(lam) else out
