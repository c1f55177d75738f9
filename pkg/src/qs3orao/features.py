"""Gaussian-kernel random Fourier features with seeded regeneration.

Frequencies are never stored. Block ``i`` of a stream is a pure function of
``(master_seed, i)``: a SplitMix64 counter stream keyed by the iteration seed
feeds a Box-Muller transform. Because every normal is addressed by a counter,
any set of blocks can be regenerated in one vectorized call, and block ``i``
is identical whether it is produced alone or together with blocks ``1..t``.

The bit layout below is part of the model file contract: changing it changes
the predictions of every saved model.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0

# elements per temporary when projecting many blocks at once
_CHUNK_ELEMENTS = 1 << 20


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 output finalizer (wrapping uint64 arithmetic)."""
    z = (z ^ (z >> _S30)) * _MUL1
    z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


def _as_u64(value: int) -> np.uint64:
    if value < 0 or value >= 1 << 64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {value}")
    return np.uint64(value)


def iteration_seeds(master_seed: int, iterations) -> np.ndarray:
    """Seeds of the given iterations: the i-th SplitMix64 output of ``master_seed``."""
    its = np.asarray(iterations, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(_as_u64(master_seed) + its * _GOLDEN)


def iteration_seed(master_seed: int, i: int) -> int:
    return int(iteration_seeds(master_seed, [i])[0])


@lru_cache(maxsize=64)
def _counter_offsets(n_uniform: int) -> np.ndarray:
    n = np.arange(1, n_uniform + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        offsets = n * _GOLDEN
    offsets.setflags(write=False)
    return offsets


def standard_normal_blocks(master_seed: int, iterations, m: int, d: int) -> np.ndarray:
    """Standard normal draws of shape ``(len(iterations), m, d)``.

    Draw ``r`` of block ``i`` depends only on ``(master_seed, i, r)``.
    """
    its = np.atleast_1d(np.asarray(iterations))
    if its.size and its.min() < 1:
        raise ValueError("iteration indices start at 1")
    n_normal = m * d
    n_pairs = (n_normal + 1) // 2
    seeds = iteration_seeds(master_seed, its)
    with np.errstate(over="ignore"):
        bits = _mix64(seeds[:, None] + _counter_offsets(2 * n_pairs)[None, :])
    u = ((bits >> _S11).astype(np.float64) + 0.5) * _INV_2_53
    u1 = u[:, 0::2]
    u2 = u[:, 1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = _TWO_PI * u2
    z = np.empty((its.size, 2 * n_pairs))
    z[:, 0::2] = radius * np.cos(angle)
    z[:, 1::2] = radius * np.sin(angle)
    return z[:, :n_normal].reshape(its.size, m, d)


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel ``k(x, x') = exp(-sigma * ||x - x'||^2)`` on ``R^d``."""

    sigma: float
    d: int

    def __post_init__(self):
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError(f"sigma must be a positive finite real, got {self.sigma}")
        if self.d < 1:
            raise ValueError(f"input dimension must be >= 1, got {self.d}")

    @property
    def spectral_std(self) -> float:
        """Per-coordinate std of the spectral density N(0, 2*sigma*I)."""
        return float(np.sqrt(2.0 * self.sigma))


def kernel_exact(spec: KernelSpec, x, x_prime) -> float:
    x = np.asarray(x, dtype=np.float64)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    if x.shape != (spec.d,) or x_prime.shape != (spec.d,):
        raise ValueError(f"expected rows of dimension {spec.d}, got {x.shape} and {x_prime.shape}")
    diff = x - x_prime
    return float(np.exp(-spec.sigma * np.dot(diff, diff)))


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Exact Gram matrix between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-spec.sigma * sq)


@dataclass(frozen=True)
class FeatureStream:
    master_seed: int
    m: int
    spec: KernelSpec

    def __post_init__(self):
        _as_u64(self.master_seed)
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")

    @property
    def dim(self) -> int:
        return 2 * self.m

    def omega_blocks(self, iterations) -> np.ndarray:
        z = standard_normal_blocks(self.master_seed, iterations, self.m, self.spec.d)
        return z * self.spec.spectral_std


def sample_omega_block(stream: FeatureStream, i: int) -> np.ndarray:
    """Frequencies of iteration ``i`` as an ``m x d`` matrix."""
    if i < 1:
        raise ValueError(f"iteration index must be >= 1, got {i}")
    return stream.omega_blocks([i])[0]


def _project(omegas: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``omega_r . x`` for every row, block and frequency: shape (n, B, m).

    Accumulates over input coordinates in a fixed order instead of calling
    BLAS, so a row's projection does not depend on what else is in the batch.
    """
    out = X[:, 0, None, None] * omegas[None, :, :, 0]
    for c in range(1, X.shape[1]):
        out += X[:, c, None, None] * omegas[None, :, :, c]
    return out


def feature_map(omega_block: np.ndarray, x) -> np.ndarray:
    """``(1/sqrt(m)) [cos(W x), sin(W x)]`` for a row (or each row of a matrix)."""
    omega_block = np.asarray(omega_block, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    m, d = omega_block.shape
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != d:
        raise ValueError(f"feature row has dimension {X.shape[-1]}, frequencies expect {d}")
    proj = _project(omega_block[None], X)[:, 0, :]
    scale = 1.0 / np.sqrt(m)
    phi = np.concatenate([scale * np.cos(proj), scale * np.sin(proj)], axis=1)
    return phi[0] if single else phi


def block_contributions(stream: FeatureStream, coefficients: np.ndarray, X: np.ndarray,
                        first: int = 1) -> np.ndarray:
    """Per-block terms ``<coefficients[b], phi_{first+b}(x)>``, shape (n, B)."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    n_blocks = coefficients.shape[0]
    m = stream.m
    out = np.empty((n, n_blocks))
    if n == 0 or n_blocks == 0:
        return out
    scale = 1.0 / np.sqrt(m)
    step = max(1, _CHUNK_ELEMENTS // max(1, n * m))
    for start in range(0, n_blocks, step):
        stop = min(n_blocks, start + step)
        omegas = stream.omega_blocks(np.arange(first + start, first + stop))
        proj = _project(omegas, X)
        coef = coefficients[start:stop]
        cos_part = (scale * np.cos(proj)) * coef[None, :, :m]
        sin_part = (scale * np.sin(proj)) * coef[None, :, m:]
        out[:, start:stop] = cos_part.sum(-1) + sin_part.sum(-1)
    return out


def evaluate(stream: FeatureStream, coefficients: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``f(x) = sum_i <alpha_i, phi_i(x)>`` for each row, summed in ascending i."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != stream.spec.d:
        raise ValueError(f"feature rows have dimension {X.shape[1]}, model expects {stream.spec.d}")
    contrib = block_contributions(stream, coefficients, X)
    if contrib.shape[1] == 0:
        return np.zeros(X.shape[0])
    return np.cumsum(contrib, axis=1)[:, -1]
