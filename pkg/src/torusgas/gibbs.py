"""Local-equilibrium reference densities and product-measure entropies.

Contains the cylinder-function class used for corrected reference densities
(zero mean and zero density-derivative mean under every Bernoulli product
measure), the unnormalized log-densities of plain and corrected profile
states, and closed-form relative entropies between product measures.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .lattice import Configuration, block_density

FCLASS_TOL = 1e-12


@dataclass
class CylinderFunction:
    """Local function of (density, occupancy pattern), smooth in the density.

    `support` lists the lattice points the function reads; `func(beta, occ)`
    and `dfunc(beta, occ)` evaluate the function and its density derivative,
    vectorized over rows of `occ` (columns follow `support` order).
    """

    support: tuple
    func: Callable
    dfunc: Callable
    name: str = "cylinder"

    def __post_init__(self):
        self.support = tuple(tuple(int(c) for c in p) for p in self.support)
        if len(set(self.support)) != len(self.support):
            raise ConfigError("cylinder support has duplicate points")

    @property
    def dimension(self) -> int:
        return len(self.support[0]) if self.support else 0

    @property
    def support_radius(self) -> int:
        """Smallest m with the support inside the side-(2m+1) cube."""
        if not self.support:
            return 0
        return max(abs(c) for p in self.support for c in p)

    def __call__(self, beta, occ):
        return self.func(beta, np.asarray(occ, dtype=np.float64))

    def density_derivative(self, beta, occ):
        return self.dfunc(beta, np.asarray(occ, dtype=np.float64))


def centered_product(points: Sequence) -> CylinderFunction:
    """Product of (eta(x) - beta) over the given (distinct) points.

    With two or more points this lies in the admissible correction class:
    the mean and the density-derivative mean vanish under every Bernoulli
    product measure.
    """
    points = tuple(tuple(int(c) for c in p) for p in points)
    if len(points) < 2:
        raise ConfigError("need at least two points for a centered product")

    def f(beta, occ):
        beta = np.asarray(beta, dtype=np.float64)
        out = np.ones(occ.shape[0])
        for j in range(occ.shape[1]):
            out = out * (occ[:, j] - beta)
        return out

    def df(beta, occ):
        beta = np.asarray(beta, dtype=np.float64)
        total = np.zeros(occ.shape[0])
        for skip in range(occ.shape[1]):
            term = -np.ones(occ.shape[0])
            for j in range(occ.shape[1]):
                if j != skip:
                    term = term * (occ[:, j] - beta)
            total += term
        return total

    return CylinderFunction(points, f, df, name="centered_product")


def product_mean(cyl: CylinderFunction, beta: float, derivative: bool = False) -> float:
    """Exact mean under the Bernoulli product measure, by enumeration."""
    s = len(cyl.support)
    patterns = np.array(list(itertools.product((0.0, 1.0), repeat=s)))
    weights = np.prod(np.where(patterns > 0.5, beta, 1.0 - beta), axis=1)
    values = cyl.density_derivative(beta, patterns) if derivative else cyl(beta, patterns)
    return float((weights * values).sum())


def fclass_check(cyl: CylinderFunction, beta_grid=None) -> dict:
    """Verify admissibility on a density grid by exact enumeration.

    Both the function and its density derivative must have zero mean under
    the Bernoulli product measure at every grid density.
    """
    if beta_grid is None:
        beta_grid = np.linspace(0.0, 1.0, 21)
    worst_f = max(abs(product_mean(cyl, float(b))) for b in beta_grid)
    worst_df = max(abs(product_mean(cyl, float(b), derivative=True)) for b in beta_grid)
    return {
        "max_mean": worst_f,
        "max_derivative_mean": worst_df,
        "ok": worst_f <= FCLASS_TOL and worst_df <= FCLASS_TOL,
    }


@dataclass
class GibbsSpec:
    """Reference-density description: log-odds field plus optional corrections.

    `lambda_grid` holds the log-odds field on the torus grid.  When
    corrections are present, `block_radius` (density window), `ell`
    (averaging radius) and the computed padding govern the spatial average:
    the average runs over the cube of radius ell - padding, the padding being
    the smallest integer that keeps every translated correction inside the
    radius-ell cube (i.e. the correction support radius).
    """

    lambda_grid: np.ndarray
    corrections: Optional[Sequence[CylinderFunction]] = None
    block_radius: int = 1
    ell: int = 0
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.lambda_grid = np.asarray(self.lambda_grid, dtype=np.float64)
        if self.corrections is not None:
            d = self.lambda_grid.ndim
            if len(self.corrections) != d:
                raise ConfigError("need one correction per axis")
            self.warnings = list(self.warnings)
            self._check_scales()

    @property
    def padding(self) -> int:
        if not self.corrections:
            return 0
        return max(c.support_radius for c in self.corrections)

    @property
    def ell_prime(self) -> int:
        return self.ell - self.padding

    def _check_scales(self):
        n = self.lambda_grid.shape[0]
        s_f = self.padding
        if self.ell_prime < 0:
            raise ConfigError("averaging radius smaller than correction support")
        if self.ell + s_f + self.padding > self.block_radius:
            self.warnings.append(
                "scale ordering ell + support + padding <= block radius not met; "
                "fine for desk-scale runs, required only asymptotically")
        vol_m = (2 * self.block_radius + 1) ** self.lambda_grid.ndim
        if vol_m >= n:
            self.warnings.append("density-window volume is not small next to N")
        if self.block_radius * vol_m <= n:
            self.warnings.append("N / (M |window|) is not small")


def log_local_gibbs(config: Configuration, lambda_grid: np.ndarray) -> float:
    """Unnormalized log-density of the profile product state: sum lambda eta."""
    lam = np.asarray(lambda_grid, dtype=np.float64)
    if lam.shape != config.geometry.shape:
        raise ConfigError("log-odds grid does not match the torus")
    return float((lam.reshape(-1) * config.occupancy).sum())


def _grad_grid(lam: np.ndarray, axis: int) -> np.ndarray:
    """Centred difference of a grid field with respect to u_axis (spacing 1/N)."""
    n = lam.shape[0]
    return (np.roll(lam, -1, axis=axis) - np.roll(lam, 1, axis=axis)) * (n / 2.0)


def log_corrected_gibbs(config: Configuration, spec: GibbsSpec) -> float:
    """Log-density of the corrected profile state (unnormalized).

    Adds to the plain log-density the term
      -(1/N) sum_i sum_x d_i lambda(x/N) * avg_{|y|<=ell'} f_i(etabar_M(x), shifted occupancy)
    where etabar_M is the block density over the radius-M window.  Reduces to
    the plain value when corrections vanish or lambda is constant.
    """
    geom = config.geometry
    lam = spec.lambda_grid
    if lam.shape != geom.shape:
        raise ConfigError("log-odds grid does not match the torus")
    base = log_local_gibbs(config, lam)
    if not spec.corrections:
        return base

    n = geom.side
    d = geom.dimension
    beta_field = block_density(config, spec.block_radius)  # (n_sites,)
    occ = config.occupancy

    lp = spec.ell_prime
    avg_offsets = np.array(list(itertools.product(range(-lp, lp + 1), repeat=d)),
                           dtype=np.int64)
    correction = 0.0
    for i, cyl in enumerate(spec.corrections):
        dlam = _grad_grid(lam, i).reshape(-1)
        if np.all(dlam == 0.0):
            continue
        support = np.array(cyl.support, dtype=np.int64)
        avg_vals = np.zeros(geom.n_sites)
        for y in avg_offsets:
            # occupancy pattern of the correction translated to x + y
            cols = geom.neighbor_table(support + y)
            pattern = occ[cols].astype(np.float64)
            avg_vals += cyl(beta_field, pattern)
        avg_vals /= len(avg_offsets)
        correction += float((dlam * avg_vals).sum())
    return base - correction / n


def relative_entropy_product(mu_marginals, nu_marginals) -> float:
    """Relative entropy between product measures with the given site marginals.

    Per site: rho log(rho/alpha) + (1-rho) log((1-rho)/(1-alpha)), with the
    0 log 0 = 0 convention; infinite when a mu marginal hits {0, 1} strictly
    inside the support mismatch.
    """
    mu = np.asarray(mu_marginals, dtype=np.float64).reshape(-1)
    nu = np.asarray(nu_marginals, dtype=np.float64).reshape(-1)
    if mu.shape != nu.shape:
        raise ConfigError("marginal fields differ in shape")
    if np.any((mu < 0) | (mu > 1)) or np.any((nu < 0) | (nu > 1)):
        raise ConfigError("marginals must lie in [0, 1]")
    interior = (mu > 0) & (mu < 1)
    if np.any(interior & ((nu == 0) | (nu == 1))):
        raise ConfigError("reference marginal degenerate where state marginal is not")
    total = 0.0
    for r, a in zip(mu, nu):
        if r > 0.0:
            if a == 0.0:
                return math.inf
            total += r * math.log(r / a)
        if r < 1.0:
            if a == 1.0:
                return math.inf
            total += (1.0 - r) * math.log((1.0 - r) / (1.0 - a))
    return total


def relative_entropy_distributions(mu: np.ndarray, nu: np.ndarray) -> float:
    """Exhaustive relative entropy between two laws on the same state list.

    This is the closed form of the variational definition (supremum over
    test functions of the mean minus the log moment-generating value), used
    as the oracle on tiny state spaces.
    """
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    mask = mu > 0
    if np.any(mask & (nu <= 0)):
        return math.inf
    return float((mu[mask] * np.log(mu[mask] / nu[mask])).sum())
