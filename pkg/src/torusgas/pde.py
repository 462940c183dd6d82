"""Conservative explicit solver for the limiting nonlinear diffusion equation.

The density field lives on a uniform periodic grid over [0,1)^d and evolves
by d_t rho = sum_ij d_i(a_ij(rho) d_j rho).  Fluxes sit on cell faces with
the coefficient matrix evaluated at the arithmetic face average, so constant
fields are exact fixed points and total mass telescopes to rounding error.
Densities leaving [0, 1] raise instead of being clamped: under the maximum
principle that only happens when the scheme or the coefficient table is
broken.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigError, InvariantViolation
from .profiles import _interp_periodic


@dataclass
class DensityField:
    """Periodic grid of densities with spacing 1/m per axis."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        m = self.values.shape[0]
        if any(s != m for s in self.values.shape):
            raise ConfigError("density grid must be cubic")

    @property
    def dimension(self) -> int:
        return self.values.ndim

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.resolution

    def mass(self) -> float:
        return float(self.values.sum() * self.h ** self.dimension)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Periodic multilinear interpolation at (n, d) torus points."""
        return _interp_periodic(self.values, np.asarray(points, dtype=np.float64))

    def copy(self) -> "DensityField":
        return DensityField(self.values.copy())

    @classmethod
    def from_profile(cls, profile, resolution: int) -> "DensityField":
        return cls(profile.sample_grid(resolution))

    def save_csv(self, path, header: dict | None = None):
        with open(path, "w") as fh:
            if header:
                fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            fh.write("# shape " + " ".join(map(str, self.values.shape)) + "\n")
            np.savetxt(fh, self.values.reshape(-1)[None, :], delimiter=",")

    @classmethod
    def load_csv(cls, path) -> "DensityField":
        shape = None
        with open(path) as fh:
            for line in fh:
                if line.startswith("# shape"):
                    shape = tuple(int(t) for t in line.split()[2:])
        values = np.loadtxt(path, delimiter=",").reshape(-1)
        if shape is None:
            m = round(len(values) ** 0.5)
            shape = (m, m)
        return cls(values.reshape(shape))

    def save_npy(self, path):
        np.save(path, self.values)

    @classmethod
    def load_npy(cls, path) -> "DensityField":
        return cls(np.load(path))


class DiffusionTable:
    """Density-dependent coefficient matrix sampled on a density grid.

    Monotone-cubic interpolation per entry, resampled onto a dense uniform
    grid for fast lookup inside the solver; symmetrized with the asymmetry
    recorded.  `floor_matrix`, when given (half the jump covariance), is
    checked to stay below the table in the matrix order at every node.
    """

    def __init__(self, alphas, matrices, floor_matrix=None, dense: int = 4097):
        alphas = np.asarray(alphas, dtype=np.float64)
        matrices = np.asarray(matrices, dtype=np.float64)
        if matrices.ndim != 3 or matrices.shape[0] != len(alphas):
            raise ConfigError("need one matrix per density node")
        order = np.argsort(alphas)
        self.alphas = alphas[order]
        mats = matrices[order]
        self.asymmetry = float(np.abs(mats - np.transpose(mats, (0, 2, 1))).max())
        mats = 0.5 * (mats + np.transpose(mats, (0, 2, 1)))
        self.matrices = mats
        self.dimension = mats.shape[1]
        self.floor_matrix = None if floor_matrix is None else np.asarray(floor_matrix)
        if self.floor_matrix is not None:
            for beta, m in zip(self.alphas, mats):
                gap = np.linalg.eigvalsh(m - self.floor_matrix).min()
                if gap < -1e-6:
                    raise ConfigError(
                        f"coefficient table dips below the mobility floor at "
                        f"density {beta:g} by {-gap:g}")
        d = self.dimension
        if len(self.alphas) >= 2:
            self._grid = np.linspace(self.alphas[0], self.alphas[-1], dense)
            self._dense = np.empty((d, d, dense))
            for i in range(d):
                for j in range(d):
                    interp = PchipInterpolator(self.alphas, mats[:, i, j])
                    self._dense[i, j] = interp(self._grid)
        else:
            self._grid = self.alphas
            self._dense = mats.transpose(1, 2, 0)
        self._zero_entry = np.all(self._dense == 0.0, axis=2)

    @classmethod
    def constant(cls, matrix) -> "DiffusionTable":
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(np.array([0.0, 1.0]), np.stack([matrix, matrix]))

    @classmethod
    def from_callable(cls, func, dimension: int, nodes: int = 401,
                      lo: float = 0.0, hi: float = 1.0) -> "DiffusionTable":
        alphas = np.linspace(lo, hi, nodes)
        mats = np.stack([np.asarray(func(a), dtype=np.float64).reshape(dimension,
                                                                       dimension)
                         for a in alphas])
        return cls(alphas, mats)

    @classmethod
    def from_diffusion_result(cls, result) -> "DiffusionTable":
        """Hydrodynamic coefficient table a(alpha) from a solver bundle."""
        alphas = list(result.alphas)
        mats = [result.hydro[a] for a in alphas]
        floor = 0.5 * np.asarray(result.sigma)
        return cls(np.array(alphas), np.stack(mats), floor_matrix=floor)

    def entry(self, i: int, j: int, rho: np.ndarray) -> np.ndarray:
        rho = np.clip(rho, self._grid[0], self._grid[-1])
        return np.interp(rho, self._grid, self._dense[i, j])

    def entry_is_zero(self, i: int, j: int) -> bool:
        return bool(self._zero_entry[i, j])

    def max_eigenvalue(self, lo: float, hi: float, samples: int = 201) -> float:
        rhos = np.linspace(lo, hi, samples)
        worst = 0.0
        for r in rhos:
            m = np.array([[self.entry(i, j, np.array([r]))[0]
                           for j in range(self.dimension)]
                          for i in range(self.dimension)])
            worst = max(worst, float(np.abs(np.linalg.eigvalsh(m)).max()))
        return worst

    def save_json(self, path):
        data = {
            "alphas": [float(a) for a in self.alphas],
            "matrices": [[[float(x) for x in row] for row in m] for m in self.matrices],
            "asymmetry": self.asymmetry,
        }
        if self.floor_matrix is not None:
            data["floor_matrix"] = [[float(x) for x in row] for row in self.floor_matrix]
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1, sort_keys=True)

    @classmethod
    def load_json(cls, path) -> "DiffusionTable":
        with open(path) as fh:
            data = json.load(fh)
        floor = data.get("floor_matrix")
        return cls(np.array(data["alphas"]), np.array(data["matrices"]),
                   floor_matrix=None if floor is None else np.array(floor))


def stability_limit(field: DensityField, table: DiffusionTable) -> float:
    """Largest stable explicit step h^2 / (2 d max-eig) over the field range."""
    lo, hi = float(field.values.min()), float(field.values.max())
    top = table.max_eigenvalue(lo, hi)
    if top <= 0.0:
        return np.inf
    d = field.dimension
    return field.h ** 2 / (2.0 * d * top)


def _face_gradients(values: np.ndarray, axis: int, h: float) -> dict:
    """Gradient components evaluated on faces normal to `axis`."""
    d = values.ndim
    grads = {}
    fwd = np.roll(values, -1, axis=axis)
    grads[axis] = (fwd - values) / h
    for j in range(d):
        if j == axis:
            continue
        cj = (np.roll(values, -1, axis=j) - np.roll(values, 1, axis=j))
        cj_fwd = (np.roll(fwd, -1, axis=j) - np.roll(fwd, 1, axis=j))
        grads[j] = (cj + cj_fwd) / (4.0 * h)
    return grads


def pde_step(field: DensityField, table: DiffusionTable, dt: float,
             source=None, t: float = 0.0) -> DensityField:
    """One conservative explicit step; raises when dt breaks the CFL bound."""
    limit = stability_limit(field, table)
    if dt > limit * (1.0 + 1e-12):
        raise ConfigError(f"time step {dt:g} above stability limit {limit:g}")
    values = field.values
    d = field.dimension
    h = field.h
    divergence = np.zeros_like(values)
    for i in range(d):
        face_rho = 0.5 * (values + np.roll(values, -1, axis=i))
        grads = _face_gradients(values, i, h)
        flux = np.zeros_like(values)
        for j in range(d):
            if table.entry_is_zero(i, j):
                continue
            flux += table.entry(i, j, face_rho) * grads[j]
        divergence += (flux - np.roll(flux, 1, axis=i)) / h
    new_values = values + dt * divergence
    if source is not None:
        new_values = new_values + dt * source(t, field)
    if new_values.min() < 0.0 or new_values.max() > 1.0:
        raise InvariantViolation("density left [0, 1]; scheme or table defect")
    return DensityField(new_values)


@dataclass
class SolveReport:
    steps: int = 0
    mass_drift: float = 0.0
    max_overshoot: float = 0.0


def solve_to_time(field: DensityField, table: DiffusionTable, t_final: float,
                  safety: float = 0.9, source=None,
                  report: SolveReport | None = None) -> DensityField:
    """Advance to t_final with automatic steps.

    Without a source, tracks mass conservation and the discrete maximum
    principle along the run and raises when either drifts beyond tolerance
    (1e-10 relative mass, 1e-12 range overshoot).
    """
    if t_final < 0:
        raise ConfigError("final time must be nonnegative")
    current = field.copy()
    if t_final == 0.0:
        return current
    mass0 = current.mass()
    lo0, hi0 = float(current.values.min()), float(current.values.max())
    dt = safety * stability_limit(current, table)
    if not np.isfinite(dt):
        dt = t_final
    t = 0.0
    steps = 0
    while t < t_final:
        step = min(dt, t_final - t)
        current = pde_step(current, table, step, source=source, t=t)
        t += step
        steps += 1
        if source is None:
            overshoot = max(lo0 - current.values.min(), current.values.max() - hi0)
            if overshoot > 1e-12:
                raise InvariantViolation(f"maximum principle violated by {overshoot:g}")
    if source is None:
        drift = abs(current.mass() - mass0) / max(abs(mass0), 1e-300)
        if drift > 1e-10:
            raise InvariantViolation(f"mass drifted by {drift:g}")
        if report is not None:
            report.mass_drift = drift
            report.max_overshoot = max(lo0 - current.values.min(),
                                       current.values.max() - hi0)
    if report is not None:
        report.steps = steps
    return current
