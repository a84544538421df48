"""Noise models and transition-probability integrals.

Diagonal-normal noise gets closed-form box probabilities through the normal
CDF (scipy.special.ndtr, accurate well below 1e-15).  Full-covariance and
custom-density noise are integrated by plain Monte Carlo over the destination
cell with a counter-based generator, so results are reproducible for a fixed
seed regardless of scheduling.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import NoiseError
from .expr import Expr
from .grid import Cell

__all__ = ["DiagonalNormal", "FullNormal", "CustomNoise", "box_probability",
           "mc_box_probability", "DEFAULT_MC_SAMPLES"]

DEFAULT_MC_SAMPLES = 10_000


@dataclass(frozen=True)
class DiagonalNormal:
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "sigma", sigma)
        if sigma.ndim != 1 or not np.all(sigma > 0):
            raise NoiseError("sigma must be a vector of positive reals")

    @property
    def dim(self):
        return len(self.sigma)


@dataclass(frozen=True)
class FullNormal:
    inv_cov: np.ndarray
    det: float
    samples: int = DEFAULT_MC_SAMPLES

    def __post_init__(self):
        inv_cov = np.asarray(self.inv_cov, dtype=float)
        object.__setattr__(self, "inv_cov", inv_cov)
        if inv_cov.ndim != 2 or inv_cov.shape[0] != inv_cov.shape[1]:
            raise NoiseError("inv_cov must be a square matrix")
        if not np.allclose(inv_cov, inv_cov.T, rtol=0, atol=1e-12):
            raise NoiseError("inv_cov must be symmetric to 1e-12")
        for k in range(1, inv_cov.shape[0] + 1):
            if np.linalg.det(inv_cov[:k, :k]) <= 0:
                raise NoiseError("inv_cov must be positive definite "
                                 f"(leading minor {k} non-positive)")
        if not self.det > 0:
            raise NoiseError("det must be positive")
        if self.samples < 2:
            raise NoiseError("samples must be >= 2")

    @property
    def dim(self):
        return self.inv_cov.shape[0]

    def density(self, y, mean):
        """Gaussian density at rows of y (k x n) around mean."""
        diff = y - mean
        quad = np.einsum("ki,ij,kj->k", diff, self.inv_cov, diff)
        n = self.dim
        norm = math.sqrt(np.linalg.det(self.inv_cov)) * (2 * math.pi) ** (-n / 2)
        return norm * np.exp(-0.5 * quad)


@dataclass(frozen=True)
class CustomNoise:
    density_expr: Expr
    dim: int
    samples: int = DEFAULT_MC_SAMPLES

    def __post_init__(self):
        if self.samples < 2:
            raise NoiseError("samples must be >= 2")

    def density(self, y, mean):
        env = {f"y{d + 1}": y[:, d] for d in range(self.dim)}
        env.update({f"m{d + 1}": mean[d] for d in range(self.dim)})
        vals = np.broadcast_to(np.asarray(
            self.density_expr.evaluate_env(env), dtype=float), (len(y),))
        if not np.all(np.isfinite(vals)):
            raise NoiseError("custom density produced a non-finite value")
        if np.any(vals < 0):
            raise NoiseError("custom density produced a negative value")
        return vals


def box_probability(noise: DiagonalNormal, mean, cell: Cell) -> float:
    """P(mean + noise lands in cell) for diagonal Gaussian noise.

    Cell bounds may use +/-inf sentinels (whole-domain leakage integral).
    """
    mean = np.asarray(mean, dtype=float)
    z_hi = (cell.hi - mean) / noise.sigma
    z_lo = (cell.lo - mean) / noise.sigma
    return float(np.prod(ndtr(z_hi) - ndtr(z_lo)))


def box_probability_means(noise: DiagonalNormal, means, cell: Cell):
    """Vectorized box_probability over rows of means (k x n)."""
    z_hi = (cell.hi - means) / noise.sigma
    z_lo = (cell.lo - means) / noise.sigma
    return np.prod(ndtr(z_hi) - ndtr(z_lo), axis=-1)


def interval_probability(sigma, mean, lo, hi):
    """1-D normal interval probability, broadcasting over any array shapes."""
    return ndtr((hi - mean) / sigma) - ndtr((lo - mean) / sigma)


def derive_seed(base, row, dest) -> int:
    """Deterministic per-(row, destination) seed, independent of scheduling."""
    ss = np.random.SeedSequence(entropy=int(base) & (2**64 - 1),
                                spawn_key=(int(row), int(dest)))
    return int(ss.generate_state(1, np.uint64)[0])


def mc_generator(seed):
    """Counter-based generator keyed by seed."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1))
    return np.random.Generator(np.random.Philox(ss))


def mc_box_probability(noise, mean, cell: Cell, seed) -> tuple:
    """Plain Monte Carlo estimate of the cell probability.

    Returns (estimate clamped to [0, 1], standard error).  Bit-reproducible
    for fixed (seed, samples).
    """
    mean = np.asarray(mean, dtype=float)
    lo = np.asarray(cell.lo, dtype=float)
    hi = np.asarray(cell.hi, dtype=float)
    volume = float(np.prod(hi - lo))
    if volume == 0.0:
        return 0.0, 0.0
    rng = mc_generator(seed)
    y = lo + (hi - lo) * rng.random((noise.samples, len(lo)))
    dens = noise.density(y, mean)
    if not np.all(np.isfinite(dens)):
        raise NoiseError("non-finite density sample in Monte Carlo integral")
    est = volume * float(np.mean(dens))
    stderr = volume * float(np.std(dens, ddof=1)) / math.sqrt(noise.samples)
    return min(max(est, 0.0), 1.0), stderr
