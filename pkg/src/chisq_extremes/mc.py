"""Monte Carlo for ``P(sup_{t in grid} chi2(t) > u)`` and the
formula-versus-simulation comparison ladder."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest, chi2, norm

from . import _kernels
from .errors import NumericalError, ParameterError, ResourceError
from .gaussian_sim import GaussianSampler, Grid, exp_power_kernel
from .rng import block_generator, map_blocks
from .tail import CONVENTIONS, GridSpec, LocalModel, chi_square_tail, constant_model, grid_tail_approx

log = logging.getLogger(__name__)

MC_BLOCK = 8192
MAX_GRID_POINTS = 10_000
MIN_EXCEEDANCES = 10
Z95 = float(norm.ppf(0.975))


def ou_model(n: int = 2, a: float = 1.0, T: float = 1.0) -> LocalModel:
    """Independent stationary OU components, ``r(s,t) = exp(-a|s-t|)``, alpha = 1."""
    return exp_power_model(n, 1.0, a, T)


def exp_power_model(n: int, alpha: float, a: float = 1.0, T: float = 1.0) -> LocalModel:
    """Independent stationary components with ``r(s,t) = exp(-a|s-t|**alpha)``."""
    if int(n) != n or n < 1:
        raise ParameterError(f"n: must be a positive integer, got {n!r}")
    kernel = exp_power_kernel(alpha, a)
    name = "ou" if alpha == 1 else "exp_power"
    return constant_model(kernel, a, alpha, int(n), T, name=name)


def wilson_interval(count: int, n: int, level: float = 0.95) -> tuple:
    if n <= 0:
        raise ParameterError("n: must be positive")
    if not 0 <= count <= n:
        raise ParameterError("count: must lie in [0, n]")
    ci = binomtest(int(count), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class MCEstimate:
    probability: float
    count: int | None  # direct method only
    n_rep: int
    ci: tuple
    seed: int
    u: float
    grid_points: int
    spacing: float | None
    jitter: tuple = ()
    method: str = "direct"
    std_error: float | None = None  # conditional method only

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci"] = list(self.ci)
        d["jitter"] = list(self.jitter)
        return d


def realized_grid(model: LocalModel, grid_spec: GridSpec, u: float) -> Grid:
    grid = grid_spec.realize(u, model.alpha, model.start, model.end)
    _check_size(grid)
    return grid


def _check_size(grid):
    if len(grid) > MAX_GRID_POINTS:
        raise ResourceError(
            f"grid: {len(grid)} points exceed the exact-Cholesky limit of {MAX_GRID_POINTS}; "
            "coarsen eta or shorten the window"
        )


def _samplers(model: LocalModel, grid: Grid):
    cache = {}
    out = []
    for k in model.kernels:
        if id(k) not in cache:
            cache[id(k)] = GaussianSampler.from_kernel(k, grid)
        out.append(cache[id(k)])
    return out


def chi2_grid_maxima(model: LocalModel, grid: Grid, n_rep: int, seed: int, *, strides=(1,),
                     threads: int | None = 1):
    """Per-replicate ``max_k sum_i X_i(t_k)**2`` over ``grid[::stride]`` for each stride.

    Component ``i`` of block ``b`` draws from stream ``(seed, i, b)``. Returns
    ``(maxima (n_rep, len(strides)), jitters)``.
    """
    if int(n_rep) != n_rep or n_rep < 1:
        raise ParameterError(f"n_rep: must be a positive integer, got {n_rep!r}")
    _check_size(grid)
    samplers = _samplers(model, grid)

    def block(b, lo, hi):
        comps = np.stack([s.draw(block_generator(seed, i, b), hi - lo) for i, s in enumerate(samplers)])
        return np.column_stack([_kernels.chi2_grid_max(comps, q) for q in strides])

    maxima = np.concatenate(map_blocks(block, int(n_rep), MC_BLOCK, threads), axis=0)
    return maxima, tuple(s.jitter for s in samplers)


MC_METHODS = ("direct", "conditional")


def sup_exceedance_mc(model: LocalModel, grid_spec: GridSpec, u: float, n_rep: int, seed: int, *,
                      threads: int | None = 1, grid: Grid | None = None, method: str = "direct") -> MCEstimate:
    """Estimate ``P(max over the realised grid of chi2 > u)``.

    ``"direct"`` counts exceedances of unconditional paths (Wilson 95% CI).
    ``"conditional"`` picks a grid point ``k`` uniformly, draws the field with
    ``chi2(t_k) > u`` imposed, and averages ``m * P(chi2_n > u) / N`` where ``N``
    is the number of exceeding grid points; each term lies in ``(0, m p]`` so the
    relative error stays bounded as ``u`` grows (normal 95% CI).
    """
    if not u > 0:
        raise ParameterError(f"u: threshold must be positive, got {u!r}")
    if int(n_rep) != n_rep or n_rep < 1:
        raise ParameterError(f"n_rep: must be a positive integer, got {n_rep!r}")
    if method not in MC_METHODS:
        raise ParameterError(f"method: must be one of {MC_METHODS}, got {method!r}")
    if grid is None:
        grid = realized_grid(model, grid_spec, u)
    _check_size(grid)
    samplers = _samplers(model, grid)
    jitter = tuple(s.jitter for s in samplers)
    common = dict(n_rep=int(n_rep), seed=int(seed), u=float(u), grid_points=len(grid), spacing=grid.step,
                  jitter=jitter, method=method)

    if method == "direct":
        def block(b, lo, hi):
            comps = np.stack([s.draw(block_generator(seed, i, b), hi - lo) for i, s in enumerate(samplers)])
            return int(np.count_nonzero(_kernels.chi2_grid_max(comps) > u))

        count = sum(map_blocks(block, int(n_rep), MC_BLOCK, threads))
        return MCEstimate(probability=count / int(n_rep), count=count, ci=wilson_interval(count, int(n_rep)),
                          **common)

    n, m = model.n, len(grid)
    p_point = chi_square_tail(n, u)
    gains = [s.factor @ s.factor.T for s in samplers]
    gains = [g / np.diagonal(g)[None, :] for g in gains]  # column k: Cov(X, X_k) / Var(X_k)
    # Stream n is reserved for the conditioning draws (components use 0..n-1).

    def block(b, lo, hi):
        k_rows = hi - lo
        comps = np.stack([s.draw(block_generator(seed, i, b), k_rows) for i, s in enumerate(samplers)])
        gen = block_generator(seed, n, b)
        k = gen.integers(0, m, k_rows)
        radius = np.sqrt(chi2.isf(p_point * (1.0 - gen.random(k_rows)), n))
        v = gen.standard_normal((k_rows, n))
        v *= (radius / np.linalg.norm(v, axis=1))[:, None]
        rows = np.arange(k_rows)
        for i in range(n):
            at_k = comps[i, rows, k]
            comps[i] += gains[i][:, k].T * (v[:, i] - at_k)[:, None]
        hits = np.count_nonzero(np.einsum("irk,irk->rk", comps, comps) > u, axis=1)
        w = 1.0 / np.maximum(hits, 1)
        return float(w.sum()), float((w * w).sum()), int(np.count_nonzero(hits == 0))

    parts = map_blocks(block, int(n_rep), MC_BLOCK, threads)
    total = sum(x[0] for x in parts)
    total_sq = sum(x[1] for x in parts)
    misses = sum(x[2] for x in parts)
    if misses:
        raise NumericalError(f"conditional estimator: {misses} replicates lost the imposed exceedance")
    mean = total / n_rep
    var = max(total_sq / n_rep - mean * mean, 0.0) * n_rep / max(n_rep - 1, 1)
    scale = m * p_point
    prob = min(scale * mean, 1.0)
    se = scale * math.sqrt(var / n_rep)
    ci = (max(prob - Z95 * se, 0.0), min(prob + Z95 * se, 1.0))
    return MCEstimate(probability=prob, count=None, ci=ci, std_error=se, **common)


def nested_grid_maxima(model: LocalModel, grid_spec: GridSpec, u: float, n_rep: int, seed: int,
                       factors=(1, 2), *, threads: int | None = 1) -> dict:
    """Maxima over the spacing ``eta_u`` lattice and its ``k * eta_u`` sub-lattices
    (anchored at the first lattice point), all from the same paths."""
    grid = realized_grid(model, grid_spec, u)
    maxima, _ = chi2_grid_maxima(model, grid, n_rep, seed, strides=tuple(factors), threads=threads)
    return {k: maxima[:, i] for i, k in enumerate(factors)}


@dataclass
class ComparisonReport:
    u_values: list
    mc: list
    formula: dict
    ratios: dict
    verdict: str
    trend_decreasing: dict
    dropped: list = field(default_factory=list)
    model: str = ""
    eta: float = 0.0

    def to_dict(self) -> dict:
        return {
            "model": self.model, "eta": self.eta, "u_values": list(self.u_values),
            "mc": [m.to_dict() for m in self.mc], "formula": self.formula, "ratios": self.ratios,
            "verdict": self.verdict, "trend_decreasing": self.trend_decreasing, "dropped": list(self.dropped),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def rows(self):
        for i, u in enumerate(self.u_values):
            m = self.mc[i]
            yield [u, m.probability, m.ci[0], m.ci[1], self.formula["A"][i], self.formula["B"][i],
                   self.ratios["A"][i], self.ratios["B"][i]]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["u", "mc", "ci_lo", "ci_hi", "conv_A", "conv_B", "ratio_A", "ratio_B"])
            for row in self.rows():
                wr.writerow([format(float(x), ".17g") for x in row])


def decide_convention(ratios: dict) -> tuple:
    """Winner = convention whose last ratio is nearest 1; also report whether
    ``|ratio - 1|`` decreases strictly along the ladder for each convention."""
    trend = {}
    for c in CONVENTIONS:
        dev = [abs(r - 1) for r in ratios[c]]
        trend[c] = bool(len(dev) >= 2 and all(b < a for a, b in zip(dev, dev[1:])))
    verdict = min(CONVENTIONS, key=lambda c: abs(ratios[c][-1] - 1)) if ratios[CONVENTIONS[0]] else ""
    return verdict, trend


def convergence_ladder(model: LocalModel, grid_spec: GridSpec, u_values, n_rep, seed: int, pickands_source, *,
                       threads: int | None = 1, method: str = "direct") -> ComparisonReport:
    """Compare the tail formula (both conventions) with simulation along ``u_values``.

    ``n_rep`` may be an int or one count per rung. With the direct method, rungs
    with fewer than ``MIN_EXCEEDANCES`` simulated exceedances are dropped with a
    warning.
    """
    u_values = [float(u) for u in u_values]
    if not u_values or any(b <= a for a, b in zip(u_values, u_values[1:])):
        raise ParameterError("u_values: must be a nonempty increasing sequence")
    reps = list(n_rep) if np.ndim(n_rep) else [int(n_rep)] * len(u_values)
    if len(reps) != len(u_values):
        raise ParameterError("n_rep: need one replicate count per rung")
    kept, mcs, dropped = [], [], []
    formula = {c: [] for c in CONVENTIONS}
    ratios = {c: [] for c in CONVENTIONS}
    for u, n in zip(u_values, reps):
        est = sup_exceedance_mc(model, grid_spec, u, n, seed, threads=threads, method=method)
        if method == "direct" and est.count < MIN_EXCEEDANCES:
            log.warning("dropping rung u=%s: only %d exceedances in %d replicates", u, est.count, n)
            dropped.append(u)
            continue
        approx = grid_tail_approx(model, grid_spec, u, pickands_source)
        kept.append(u)
        mcs.append(est)
        for c in CONVENTIONS:
            formula[c].append(approx.by_convention[c])
            ratios[c].append(approx.by_convention[c] / est.probability)
    verdict, trend = decide_convention(ratios)
    return ComparisonReport(kept, mcs, formula, ratios, verdict, trend, dropped, model.name, grid_spec.eta)
