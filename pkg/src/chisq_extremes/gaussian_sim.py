"""Exact sampling of centred Gaussian processes on finite grids.

General covariance kernels are sampled through a (jittered) Cholesky factor,
fractional Brownian motion through circulant embedding of its increments.
Samplers are immutable after construction and draw from a caller-supplied
generator, so they can be shared by worker threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import lapack

from .errors import DomainError, NotPositiveDefiniteError, ParameterError
from .rng import block_generator, map_blocks

MAX_JITTER = 1e-10
EMBEDDING_NEG_TOL = 1e-12
DEFAULT_BLOCK = 4096


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered, finite set of time points."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).ravel()
        if pts.size == 0:
            raise ParameterError("grid: points must be nonempty")
        if not np.all(np.isfinite(pts)):
            raise ParameterError("grid: points must be finite")
        if pts.size > 1 and not np.all(np.diff(pts) > 0):
            raise ParameterError("grid: points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, start: float, step: float, count: int) -> "Grid":
        if step <= 0 or count < 1:
            raise ParameterError("grid: step must be positive and count >= 1")
        return cls(start + step * np.arange(count))

    @classmethod
    def lattice(cls, lo: float, hi: float, spacing: float) -> "Grid":
        """The points of ``spacing * Z`` inside ``[lo, hi]``."""
        if not spacing > 0:
            raise ParameterError("grid: spacing must be positive")
        tol = 1e-9
        k_lo = math.ceil(lo / spacing - tol)
        k_hi = math.floor(hi / spacing + tol)
        if k_hi < k_lo:
            raise ParameterError(f"grid: no lattice point of spacing {spacing!r} in [{lo!r}, {hi!r}]")
        return cls(np.arange(k_lo, k_hi + 1) * spacing)

    def __len__(self):
        return self.points.size

    @property
    def step(self) -> float | None:
        if self.points.size < 2:
            return None
        d = np.diff(self.points)
        if np.allclose(d, d[0], rtol=1e-9, atol=0.0):
            return float(d[0])
        return None

    @property
    def uniform_spacing(self) -> bool:
        return self.points.size < 2 or self.step is not None


@dataclass(frozen=True)
class CovKernel:
    """Unit-variance correlation kernel ``(s, t) -> r(s, t)`` on an interval.

    ``func`` must broadcast over numpy arrays.
    """

    func: Callable
    lo: float = -math.inf
    hi: float = math.inf
    open_interval: bool = False
    name: str = "kernel"

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.open_interval:
            return (t > self.lo) & (t < self.hi)
        return (t >= self.lo) & (t <= self.hi)

    def check_domain(self, *args):
        for t in args:
            if not np.all(self.contains(t)):
                bad = np.asarray(t, dtype=np.float64)[~self.contains(t)]
                br = "()" if self.open_interval else "[]"
                raise DomainError(
                    f"{self.name}: point {float(bad.ravel()[0])!r} outside domain "
                    f"{br[0]}{self.lo!r}, {self.hi!r}{br[1]}"
                )

    def __call__(self, s, t):
        self.check_domain(s, t)
        return self.func(np.asarray(s, dtype=np.float64), np.asarray(t, dtype=np.float64))


def ou_kernel(a: float = 1.0) -> CovKernel:
    """Stationary Ornstein-Uhlenbeck correlation ``exp(-a|s-t|)``."""
    return exp_power_kernel(1.0, a)


def exp_power_kernel(alpha: float, a: float = 1.0) -> CovKernel:
    """``exp(-a|s-t|**alpha)``, positive definite for ``alpha`` in (0, 2]."""
    if not 0 < alpha <= 2 or not a > 0:
        raise ParameterError("exp_power_kernel: need alpha in (0,2] and a > 0")
    return CovKernel(lambda s, t: np.exp(-a * np.abs(s - t) ** alpha), name=f"exp_power(alpha={alpha},a={a})")


def fbm_covariance(alpha: float, s, t):
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    return 0.5 * (np.abs(s) ** alpha + np.abs(t) ** alpha - np.abs(t - s) ** alpha)


def build_cov_matrix(kernel: CovKernel, grid: Grid) -> np.ndarray:
    """Correlation matrix of ``kernel`` on ``grid``; exactly symmetric, unit diagonal."""
    p = grid.points
    kernel.check_domain(p)
    m = np.asarray(kernel.func(p[:, None], p[None, :]), dtype=np.float64)
    diag = np.diagonal(m)
    if not np.allclose(diag, 1.0, rtol=0.0, atol=1e-12):
        raise ParameterError(f"{kernel.name}: kernel does not have unit variance on the grid")
    upper = np.triu(m, 1)
    out = upper + upper.T
    np.fill_diagonal(out, 1.0)
    return out


def _failed_pivot(cov, factor, info):
    k = info - 1
    return float(cov[k, k] - np.dot(factor[k, :k], factor[k, :k]))


def cholesky_factor(cov, max_jitter: float = MAX_JITTER):
    """Lower Cholesky factor of ``cov`` and the diagonal jitter that was needed.

    Jitter grows by decades from 1e-14 up to ``max_jitter``; past that a
    :class:`NotPositiveDefiniteError` carrying the smallest failed pivot is raised.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ParameterError("cholesky: covariance must be a square matrix")
    if not np.array_equal(cov, cov.T):
        raise ParameterError("cholesky: covariance must be symmetric")
    jitter = 0.0
    smallest = math.inf
    while True:
        a = cov + jitter * np.eye(cov.shape[0]) if jitter else cov
        c, info = lapack.dpotrf(a, lower=1, clean=1)
        if info == 0:
            return c, jitter
        if info < 0:  # pragma: no cover - argument error from LAPACK
            raise NotPositiveDefiniteError(f"dpotrf argument error {info}")
        smallest = min(smallest, _failed_pivot(a, c, info))
        jitter = 1e-14 if jitter == 0.0 else jitter * 10.0
        if jitter > max_jitter * (1 + 1e-9):
            raise NotPositiveDefiniteError(
                f"covariance not positive semidefinite: smallest pivot {smallest:.3e} "
                f"with jitter up to {max_jitter:.0e}",
                pivot=smallest,
                jitter=max_jitter,
            )


@dataclass(frozen=True)
class PathBatch:
    """Sampled paths: one row per replicate, one column per grid point."""

    values: np.ndarray
    seed: int
    grid: Grid
    jitter: float = 0.0
    method: str = "cholesky"

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[1] != len(self.grid):
            raise ParameterError("path batch: values must be (n_rep, len(grid))")
        if not np.all(np.isfinite(v)):
            raise ParameterError("path batch: non-finite sample")

    @property
    def n_rep(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path):
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")

    def to_npy(self, path):
        np.save(path, self.values)


@dataclass(frozen=True, eq=False)
class GaussianSampler:
    """Sampler for ``N(0, cov)`` built from a Cholesky factor."""

    factor: np.ndarray
    jitter: float = 0.0

    @classmethod
    def from_cov(cls, cov, max_jitter: float = MAX_JITTER) -> "GaussianSampler":
        factor, jitter = cholesky_factor(cov, max_jitter)
        return cls(factor, jitter)

    @classmethod
    def from_kernel(cls, kernel: CovKernel, grid: Grid, max_jitter: float = MAX_JITTER):
        return cls.from_cov(build_cov_matrix(kernel, grid), max_jitter)

    @property
    def size(self) -> int:
        return self.factor.shape[0]

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        z = gen.standard_normal((n, self.size))
        return z @ self.factor.T


def cholesky_sample(cov, n_rep: int, seed: int, *, grid: Grid | None = None,
                    threads: int = 1, stream: int = 0, block_size: int = DEFAULT_BLOCK) -> PathBatch:
    cov = np.asarray(cov, dtype=np.float64)
    if n_rep < 1:
        raise ParameterError("n_rep must be >= 1")
    if not np.allclose(np.diagonal(cov), 1.0, rtol=0.0, atol=1e-12):
        raise ParameterError("cholesky_sample: covariance must have unit diagonal")
    sampler = GaussianSampler.from_cov(cov)
    if grid is None:
        grid = Grid(np.arange(cov.shape[0], dtype=np.float64))
    blocks = map_blocks(
        lambda b, lo, hi: sampler.draw(block_generator(seed, stream, b), hi - lo),
        n_rep, block_size, threads,
    )
    return PathBatch(np.vstack(blocks), seed, grid, sampler.jitter, "cholesky")


@dataclass(frozen=True, eq=False)
class FBMSampler:
    """Fractional Brownian motion ``B_alpha`` (Hurst ``alpha/2``) on a uniform grid from 0.

    Increments are drawn by circulant embedding; one complex FFT yields two
    independent paths. When the embedding spectrum is negative beyond
    ``EMBEDDING_NEG_TOL`` the sampler falls back to a Cholesky factor of the
    path covariance.
    """

    alpha: float
    grid: Grid
    method: str = field(init=False)
    _sqrt_eig: np.ndarray | None = field(init=False, default=None, repr=False)
    _chol: GaussianSampler | None = field(init=False, default=None, repr=False)

    def __post_init__(self):
        alpha = float(self.alpha)
        if not 0 < alpha <= 2:
            raise ParameterError(f"alpha: must lie in (0, 2], got {self.alpha!r}")
        pts = self.grid.points
        if pts[0] != 0.0:
            raise ParameterError("fbm: grid must start at 0")
        if not self.grid.uniform_spacing:
            raise ParameterError("fbm: grid must be uniform")
        m = len(self.grid) - 1
        if alpha == 2.0 or m == 0:
            object.__setattr__(self, "method", "linear" if alpha == 2.0 else "trivial")
            return
        h = self.grid.step
        k = np.arange(m + 1, dtype=np.float64)
        gamma = 0.5 * (np.abs(k + 1) ** alpha + np.abs(k - 1) ** alpha - 2 * k ** alpha) * h ** alpha
        circ = np.concatenate([gamma, gamma[-2:0:-1]])
        eig = np.fft.fft(circ).real
        if eig.min() < -EMBEDDING_NEG_TOL:
            chol = GaussianSampler.from_cov(fbm_covariance(alpha, pts[1:, None], pts[None, 1:]))
            object.__setattr__(self, "_chol", chol)
            object.__setattr__(self, "method", "cholesky")
            return
        eig = np.clip(eig, 0.0, None)
        object.__setattr__(self, "_sqrt_eig", np.sqrt(eig / circ.size))
        object.__setattr__(self, "method", "circulant")

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        pts = self.grid.points
        m = pts.size - 1
        out = np.zeros((n, m + 1))
        if self.method == "trivial":
            return out
        if self.method == "linear":
            return gen.standard_normal(n)[:, None] * pts[None, :]
        if self.method == "cholesky":
            out[:, 1:] = self._chol.draw(gen, n)
            return out
        half = (n + 1) // 2
        z = gen.standard_normal((half, 2, self._sqrt_eig.size))
        w = np.fft.fft(self._sqrt_eig * (z[:, 0] + 1j * z[:, 1]), axis=1)[:, :m]
        inc = np.concatenate([w.real, w.imag], axis=0)[:n]
        np.cumsum(inc, axis=1, out=out[:, 1:])
        return out


def fbm_sample(alpha: float, grid: Grid, n_rep: int, seed: int, *, threads: int = 1,
               stream: int = 0, block_size: int = 256) -> PathBatch:
    if n_rep < 1:
        raise ParameterError("n_rep must be >= 1")
    sampler = FBMSampler(alpha, grid)
    blocks = map_blocks(
        lambda b, lo, hi: sampler.draw(block_generator(seed, stream, b), hi - lo),
        n_rep, block_size, threads,
    )
    return PathBatch(np.vstack(blocks), seed, grid, 0.0, sampler.method)
