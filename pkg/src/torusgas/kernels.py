"""Finite-range jump laws on Z^d and their derived static quantities.

A kernel is a short list of (offset, probability) pairs.  Everything the
rest of the package needs from it is computed here once: mean drift,
covariance matrix, the even/odd split of the weights, and the reversed
kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class TransitionKernel:
    """Jump law: offsets (k, d) int array, weights (k,) float array."""

    dimension: int
    offsets: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if offsets.ndim != 2 or offsets.shape[1] != self.dimension:
            raise ConfigError("offsets must be a (k, d) integer array")
        if weights.shape != (offsets.shape[0],):
            raise ConfigError("weights must match offsets")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "weights", weights)

    @property
    def range(self) -> int:
        """Largest sup-norm of a support offset."""
        return int(np.abs(self.offsets).max())

    def weight_of(self, offset) -> float:
        hit = (self.offsets == np.asarray(offset, dtype=np.int64)).all(axis=1)
        idx = np.nonzero(hit)[0]
        return float(self.weights[idx[0]]) if len(idx) else 0.0

    @classmethod
    def from_entries(cls, dimension, entries) -> "TransitionKernel":
        """Build from [{"offset": [...], "prob": p}, ...] records."""
        offsets = np.array([e["offset"] for e in entries], dtype=np.int64)
        weights = np.array([e["prob"] for e in entries], dtype=np.float64)
        return cls(dimension, offsets, weights)

    def to_entries(self):
        return [
            {"offset": [int(c) for c in z], "prob": float(p)}
            for z, p in zip(self.offsets, self.weights)
        ]


@dataclass(frozen=True)
class KernelAnalysis:
    """Derived static data of a validated kernel.

    drift q = sum z p(z); covariance sigma_ij = sum p(z) z_i z_j;
    even/odd parts s, a of the weights over the symmetrized support;
    adjoint = kernel with reflected offsets.
    """

    kernel: TransitionKernel
    drift: np.ndarray
    covariance: np.ndarray
    sym_offsets: np.ndarray  # symmetrized support, (m, d)
    sym_weights: np.ndarray  # s on the symmetrized support
    asym_weights: np.ndarray  # a on the symmetrized support
    adjoint: TransitionKernel

    @property
    def dimension(self) -> int:
        return self.kernel.dimension

    @property
    def range(self) -> int:
        return self.kernel.range

    @property
    def is_symmetric(self) -> bool:
        return bool(np.all(self.asym_weights == 0.0))

    def sym_of(self, offset) -> float:
        return _lookup(self.sym_offsets, self.sym_weights, offset)

    def asym_of(self, offset) -> float:
        return _lookup(self.sym_offsets, self.asym_weights, offset)


def _lookup(offsets, values, offset) -> float:
    hit = (offsets == np.asarray(offset, dtype=np.int64)).all(axis=1)
    idx = np.nonzero(hit)[0]
    return float(values[idx[0]]) if len(idx) else 0.0


def validate_kernel(kernel: TransitionKernel) -> KernelAnalysis:
    """Check kernel invariants and compute all derived quantities.

    Raises ConfigError on: empty support, weights not in (0, 1], weight sum
    off 1 beyond 1e-12, a zero offset (a self-jump is a no-op in exclusion
    dynamics, so its presence is a config typo), duplicate offsets, or an
    unsupported dimension.
    """
    k = kernel
    if k.dimension not in (1, 2, 3):
        raise ConfigError(f"dimension must be 1, 2 or 3, got {k.dimension}")
    if len(k.weights) == 0:
        raise ConfigError("kernel has no entries")
    if np.any(k.weights <= 0.0) or np.any(k.weights > 1.0):
        raise ConfigError("kernel weights must lie in (0, 1]")
    total = float(k.weights.sum())
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise ConfigError(f"kernel weights sum to {total!r}, not 1")
    if np.any((k.offsets == 0).all(axis=1)):
        raise ConfigError("kernel contains the zero offset")
    uniq = {tuple(int(c) for c in z) for z in k.offsets}
    if len(uniq) != len(k.offsets):
        raise ConfigError("kernel contains duplicate offsets")

    drift = (k.weights[:, None] * k.offsets).sum(axis=0)
    covariance = np.einsum("k,ki,kj->ij", k.weights, k.offsets.astype(float),
                           k.offsets.astype(float))

    # even/odd split over the support closed under reflection
    support = {tuple(int(c) for c in z): float(p) for z, p in zip(k.offsets, k.weights)}
    sym_support = sorted(uniq | {tuple(-c for c in z) for z in uniq})
    sym_offsets = np.array(sym_support, dtype=np.int64)
    p_plus = np.array([support.get(z, 0.0) for z in sym_support])
    p_minus = np.array([support.get(tuple(-c for c in z), 0.0) for z in sym_support])
    sym_weights = 0.5 * (p_plus + p_minus)
    asym_weights = 0.5 * (p_plus - p_minus)

    adjoint = TransitionKernel(k.dimension, -k.offsets, k.weights.copy())

    eig = np.linalg.eigvalsh(covariance)
    if eig.min() < -1e-12:
        raise ConfigError("covariance matrix not positive semidefinite")

    return KernelAnalysis(
        kernel=k,
        drift=drift,
        covariance=covariance,
        sym_offsets=sym_offsets,
        sym_weights=sym_weights,
        asym_weights=asym_weights,
        adjoint=adjoint,
    )


def adjoint_kernel(kernel: TransitionKernel) -> TransitionKernel:
    """Reversed jump law: the weight of z becomes the weight of -z."""
    validate_kernel(kernel)
    return TransitionKernel(kernel.dimension, -kernel.offsets, kernel.weights.copy())


def ssep(dimension: int) -> TransitionKernel:
    """Symmetric nearest-neighbour kernel: weight 1/(2d) on each +-e_i."""
    offsets = []
    for i in range(dimension):
        e = [0] * dimension
        e[i] = 1
        offsets.append(list(e))
        e2 = [0] * dimension
        e2[i] = -1
        offsets.append(e2)
    weights = [1.0 / (2 * dimension)] * (2 * dimension)
    return TransitionKernel(dimension, np.array(offsets), np.array(weights))


def tasep(dimension: int) -> TransitionKernel:
    """Totally asymmetric kernel: all jumps along +e_1."""
    e1 = [0] * dimension
    e1[0] = 1
    return TransitionKernel(dimension, np.array([e1]), np.array([1.0]))
