"""Generalised edge-count scan statistic ``S(t) = X1(t)**2 + X2(t)**2``.

``X1`` and ``X2`` are independent with correlations

    r1(s, t) = (s∧t)(1 - s∨t) / ((s∨t)(1 - s∧t))
    r2(s, t) = (s∧t)(1 - s∨t) / sqrt((s∧t)(1 - s∧t)(s∨t)(1 - s∨t))

and local variances ``a1 = 1/(t(1-t))``, ``a2 = 1/(2t(1-t))`` (alpha = 1). The
p-value of ``sup_{[T1,T2] ∩ Z/u} S > u`` is the tail formula with ``eta = 1``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, ParameterError
from .gaussian_sim import CovKernel, GaussianSampler, Grid
from .mc import MCEstimate, chi2_grid_maxima, sup_exceedance_mc, _check_size
from .pickands import pickands_table
from .rng import block_generator, map_blocks
from .tail import GridSpec, LocalModel, TailApproximation, grid_tail_approx

log = logging.getLogger(__name__)

SCAN_GRID = GridSpec(1.0)


@dataclass(frozen=True)
class ScanWindow:
    T1: float
    T2: float
    u: float

    def __post_init__(self):
        if not 0 < self.T1 < 1:
            raise ParameterError(f"T1: must lie in (0, 1), got {self.T1!r}")
        if not 0 < self.T2 < 1:
            raise ParameterError(f"T2: must lie in (0, 1), got {self.T2!r}")
        if self.T2 < self.T1:
            raise ParameterError(f"T2: must be >= T1, got T1={self.T1!r}, T2={self.T2!r}")
        if not self.u > 0:
            raise ParameterError(f"u: threshold must be positive, got {self.u!r}")

    @property
    def grid(self) -> Grid:
        """Points of ``Z/u`` inside ``[T1, T2]``; the single point ``T1`` if there are none."""
        k_lo = math.ceil(self.T1 * self.u - 1e-9)
        k_hi = math.floor(self.T2 * self.u + 1e-9)
        if k_hi < k_lo:
            log.warning("window [%s, %s] holds no point of Z/%s; using {T1}", self.T1, self.T2, self.u)
            return Grid([self.T1])
        return Grid(np.arange(k_lo, k_hi + 1) / self.u)


def _check_unit_interval(*args):
    for x in args:
        x = np.asarray(x, dtype=np.float64)
        if np.any(~((x > 0) & (x < 1))):
            raise DomainError(f"edge-count kernel: time {float(x[~((x > 0) & (x < 1))].ravel()[0])!r} outside (0, 1)")


def _r1(s, t):
    lo, hi = np.minimum(s, t), np.maximum(s, t)
    return lo * (1 - hi) / (hi * (1 - lo))


def _r2(s, t):
    lo, hi = np.minimum(s, t), np.maximum(s, t)
    return lo * (1 - hi) / np.sqrt(lo * (1 - lo) * hi * (1 - hi))


_FORMULAS = {1: _r1, 2: _r2}


def edge_count_cov(which: int, s, t):
    if which not in _FORMULAS:
        raise ParameterError(f"which: component must be 1 or 2, got {which!r}")
    _check_unit_interval(s, t)
    out = _FORMULAS[which](np.asarray(s, dtype=np.float64), np.asarray(t, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def edge_count_kernel(which: int) -> CovKernel:
    if which not in _FORMULAS:
        raise ParameterError(f"which: component must be 1 or 2, got {which!r}")
    return CovKernel(_FORMULAS[which], 0.0, 1.0, open_interval=True, name=f"edge_count_{which}")


def local_variance_coeffs(t):
    _check_unit_interval(t)
    t = np.asarray(t, dtype=np.float64)
    a1 = 1.0 / (t * (1 - t))
    a2 = 1.0 / (2 * t * (1 - t))
    if a1.ndim == 0:
        return float(a1), float(a2)
    return a1, a2


def verify_local_stationarity(which: int, t: float, s_ladder) -> np.ndarray:
    """Finite-difference ratios ``(1 - r_i(t, t+s)) / s`` along ``s_ladder``."""
    s = np.asarray(s_ladder, dtype=np.float64)
    if s.size == 0 or np.any(s <= 0):
        raise ParameterError("s_ladder: must be positive")
    if s.size > 1 and np.any(np.diff(s) >= 0):
        raise ParameterError("s_ladder: must be decreasing")
    _check_unit_interval(t, t + s)
    r = edge_count_cov(which, np.full_like(s, t), t + s)
    return (1.0 - r) / s


def edge_count_model(T1: float, T2: float) -> LocalModel:
    return LocalModel(
        alpha=1.0,
        a_fns=[lambda t: local_variance_coeffs(t)[0], lambda t: local_variance_coeffs(t)[1]],
        kernels=[edge_count_kernel(1), edge_count_kernel(2)],
        T=T2 - T1,
        start=T1,
        name="edge_count",
    )


def local_variance_range(T1: float, T2: float) -> tuple:
    """Smallest and largest ``sum v_i**2 a_i(t)`` over the unit circle and ``[T1, T2]``."""
    ts = np.array([T1, T2, min(max(0.5, T1), T2)])
    a1, a2 = local_variance_coeffs(ts)
    return float(a2.min()), float(a1.max())


def scan_pickands_table(T1: float, T2: float, *, quadrature_nodes: int = 9, seed: int = 0, n_rep: int = 100_000,
                        S: float = 128.0, threads: int | None = 1):
    """Pickands table (alpha = 1, eta = 1) covering every argument the p-value formula needs."""
    lo, hi = local_variance_range(T1, T2)
    return pickands_table(1.0, [lo, hi], 1.0, quadrature_nodes, seed=seed, n_rep=n_rep, S=S, threads=threads)


def pvalue_asymptotic(window: ScanWindow, pickands_source, **kwargs) -> TailApproximation:
    """Asymptotic p-value ``u e^{-u/2}/(2 pi) ∫∫ H(1, (v1² + v2²/2)/(t(1-t)), 1) dv dt``
    (convention B); ``by_convention`` also carries the raw-measure value."""
    return grid_tail_approx(edge_count_model(window.T1, window.T2), SCAN_GRID, window.u, pickands_source, "B",
                         **kwargs)


def pvalue_mc(window: ScanWindow, n_rep: int, seed: int, *, threads: int | None = 1,
              method: str = "direct") -> MCEstimate:
    """Simulated ``P(max of S(t) over the window lattice > u)``; ``method`` as in
    :func:`~chisq_extremes.mc.sup_exceedance_mc`."""
    model = edge_count_model(window.T1, window.T2)
    return sup_exceedance_mc(model, SCAN_GRID, window.u, n_rep, seed, threads=threads, grid=window.grid,
                             method=method)


def nested_window_maxima(outer: ScanWindow, inner: tuple, n_rep: int, seed: int, *,
                         threads: int | None = 1) -> tuple:
    """Per-replicate maxima of ``S`` over the outer window's lattice and over the
    lattice points inside ``inner = (T1', T2')``, from the same paths."""
    grid = outer.grid
    pts = grid.points
    tol = 1e-9 / outer.u
    sel = np.flatnonzero((pts >= inner[0] - tol) & (pts <= inner[1] + tol))
    if sel.size == 0:
        raise ParameterError("inner: window contains no lattice point")
    _check_size(grid)
    samplers = [GaussianSampler.from_kernel(edge_count_kernel(i), grid) for i in (1, 2)]

    def block(b, lo, hi):
        comps = np.stack([s.draw(block_generator(seed, i, b), hi - lo) for i, s in enumerate(samplers)])
        return np.column_stack([_kernels.chi2_grid_max(comps), _kernels.chi2_grid_max(comps[:, :, sel])])

    m = np.concatenate(map_blocks(block, int(n_rep), 8192, threads), axis=0)
    return m[:, 0], m[:, 1]


__all__ = [
    "ScanWindow", "edge_count_cov", "edge_count_kernel", "local_variance_coeffs", "verify_local_stationarity",
    "edge_count_model", "local_variance_range", "scan_pickands_table", "pvalue_asymptotic", "pvalue_mc",
    "nested_window_maxima", "chi2_grid_maxima",
]
