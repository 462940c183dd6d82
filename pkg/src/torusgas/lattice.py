"""Discrete torus geometry and occupancy configurations.

Sites of the side-N torus in d dimensions are indexed row-major by the flat
index of their coordinate tuple; occupancy is one byte per site with a
cached particle count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvariantViolation


@dataclass(frozen=True)
class TorusGeometry:
    dimension: int
    side: int

    def __post_init__(self):
        if self.side < 2:
            raise ConfigError("torus side must be at least 2")
        if self.dimension not in (1, 2, 3):
            raise ConfigError("dimension must be 1, 2 or 3")

    @property
    def n_sites(self) -> int:
        return self.side ** self.dimension

    @property
    def shape(self) -> tuple:
        return (self.side,) * self.dimension

    def site_index(self, coords) -> int:
        """Flat index of a coordinate tuple, wrapping periodically."""
        coords = np.mod(np.asarray(coords, dtype=np.int64), self.side)
        return int(np.ravel_multi_index(coords, self.shape))

    def site_coords(self, index: int) -> np.ndarray:
        return np.array(np.unravel_index(index, self.shape), dtype=np.int64)

    def all_coords(self) -> np.ndarray:
        """(n_sites, d) coordinates in flat-index order."""
        grids = np.indices(self.shape).reshape(self.dimension, -1)
        return grids.T.astype(np.int64)

    def neighbor_table(self, offsets: np.ndarray) -> np.ndarray:
        """(n_sites, k) flat indices of site + offset for each offset row."""
        coords = self.all_coords()  # (n, d)
        out = np.empty((self.n_sites, len(offsets)), dtype=np.int64)
        for j, z in enumerate(offsets):
            shifted = np.mod(coords + np.asarray(z, dtype=np.int64), self.side)
            out[:, j] = np.ravel_multi_index(shifted.T, self.shape)
        return out


@dataclass
class Configuration:
    """0/1 occupancy of the torus plus a cached particle count."""

    geometry: TorusGeometry
    occupancy: np.ndarray
    particle_count: int = field(default=-1)

    def __post_init__(self):
        occ = np.ascontiguousarray(self.occupancy, dtype=np.uint8)
        if occ.shape != (self.geometry.n_sites,):
            raise ConfigError("occupancy must be flat with one entry per site")
        if np.any(occ > 1):
            raise ConfigError("occupancy values must be 0 or 1")
        self.occupancy = occ
        if self.particle_count < 0:
            self.particle_count = int(occ.sum())

    def check_count(self):
        if self.particle_count != int(self.occupancy.sum()):
            raise InvariantViolation("cached particle count is stale")

    def copy(self) -> "Configuration":
        return Configuration(self.geometry, self.occupancy.copy(), self.particle_count)

    def as_grid(self) -> np.ndarray:
        return self.occupancy.reshape(self.geometry.shape)

    def state_code(self) -> int:
        """Occupancy packed into a single integer, bit x = site x."""
        code = 0
        for x in np.nonzero(self.occupancy)[0]:
            code |= 1 << int(x)
        return code

    @classmethod
    def from_state_code(cls, geometry: TorusGeometry, code: int) -> "Configuration":
        occ = np.zeros(geometry.n_sites, dtype=np.uint8)
        for x in range(geometry.n_sites):
            if (code >> x) & 1:
                occ[x] = 1
        return cls(geometry, occ)

    @classmethod
    def empty(cls, geometry: TorusGeometry) -> "Configuration":
        return cls(geometry, np.zeros(geometry.n_sites, dtype=np.uint8))

    @classmethod
    def full(cls, geometry: TorusGeometry) -> "Configuration":
        return cls(geometry, np.ones(geometry.n_sites, dtype=np.uint8))


def swap(config: Configuration, x: int, y: int) -> Configuration:
    """Exchange the occupancies of two sites (new configuration)."""
    out = config.copy()
    occ = out.occupancy
    occ[x], occ[y] = occ[y], occ[x]
    return out


def sample_product_measure(geometry: TorusGeometry, profile, rng) -> Configuration:
    """Independent site occupancies; site x occupied with probability rho(x/N).

    `profile` is a constant in [0, 1], a flat array of per-site probabilities,
    or an object with `values_at(points)` evaluating on [0,1)^d points.
    """
    n = geometry.n_sites
    if np.isscalar(profile):
        probs = np.full(n, float(profile))
    elif hasattr(profile, "values_at"):
        pts = geometry.all_coords() / geometry.side
        probs = np.asarray(profile.values_at(pts), dtype=np.float64)
    else:
        probs = np.asarray(profile, dtype=np.float64).reshape(-1)
        if probs.shape != (n,):
            raise ConfigError("profile grid incompatible with torus size")
    if probs.min() < 0.0 or probs.max() > 1.0:
        raise ConfigError("profile values must lie in [0, 1]")
    occ = (rng.random(n) < probs).astype(np.uint8)
    return Configuration(geometry, occ)


def block_density(config: Configuration, radius: int) -> np.ndarray:
    """Mean occupancy over the cube of the given radius around every site.

    Returns a flat array over sites; integer box sums are formed first so the
    only rounding is the final division by the cube volume.
    """
    geom = config.geometry
    if 2 * radius + 1 > geom.side:
        raise ConfigError("block does not fit in the torus")
    grid = config.as_grid().astype(np.int64)
    for axis in range(geom.dimension):
        acc = grid.copy()
        for shift in range(1, radius + 1):
            acc += np.roll(grid, shift, axis=axis)
            acc += np.roll(grid, -shift, axis=axis)
        grid = acc
    volume = (2 * radius + 1) ** geom.dimension
    return (grid / volume).reshape(-1)


def empirical_pairing(config: Configuration, test_function) -> float:
    """Mass-(1/N^d)-per-particle pairing: N^{-d} sum_x H(x/N) eta(x)."""
    geom = config.geometry
    pts = geom.all_coords() / geom.side
    values = np.asarray(test_function(pts), dtype=np.float64)
    return float((values * config.occupancy).sum() / geom.n_sites)
