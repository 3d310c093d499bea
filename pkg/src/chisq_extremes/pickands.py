"""Monte Carlo estimation of discrete Pickands constants.

``H(alpha, a, eta) = lim_S (1/S) E[ sup_{t in [0,S] ∩ eta Z} exp(sqrt(2a) B(t) - a t**alpha) ]``
with ``B`` a fractional Brownian motion of variance ``t**alpha`` (``eta = 0``
means the continuous supremum).

Two estimators of the truncated functional ``(1/S) E[sup ...]`` are offered:

``"truncated"``
    The sample mean of the supremum itself. Unbiased, but the supremum has a
    ``1/x`` tail up to ``x ~ exp(S)``, so the variance grows exponentially in
    the horizon and the sample mean collapses for ``S`` beyond ``log n_rep``.
``"shifted"``
    Reweighting by ``exp(Z(tau))`` for a uniformly chosen grid point ``tau``
    (``E exp(Z(tau)) = 1``) and shifting the path so that ``tau`` becomes the
    origin gives ``E[sup_G e^Z] = |G| E[sup_G e^Z / sum_G e^Z]`` with the
    stationary-increment path ``Z(t) - Z(tau)``. Same expectation for every
    finite ``S``, per-replicate values bounded by ``|G| / S``.

The horizon limit is taken by a linear fit in ``1/S`` over a ladder of
horizons sharing the same paths; for ``eta = 0`` the supremum is computed on
two nested grids and extrapolated in ``step**(alpha/2)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels
from .errors import NumericalError, ParameterError, TableRangeError
from .gaussian_sim import FBMSampler, Grid
from .rng import block_generator, map_blocks

PICKANDS_BLOCK = 64
MAX_SCALED_STEP = 0.01
TABLE_FORMAT_VERSION = 1
METHODS = ("shifted", "truncated")


def reduce_to_unit_scale(alpha: float, a: float, eta: float) -> tuple[float, float]:
    """``(a**(1/alpha), eta * a**(1/alpha))`` so that
    ``H(alpha, a, eta) = scale * H(alpha, 1, eta_prime)``."""
    _check_alpha(alpha)
    if not a > 0:
        raise ParameterError(f"a: must be positive, got {a!r}")
    if not eta >= 0:
        raise ParameterError(f"eta: must be >= 0, got {eta!r}")
    scale = a ** (1.0 / alpha)
    return scale, eta * scale


def _check_alpha(alpha):
    if not 0 < alpha <= 2:
        raise ParameterError(f"alpha: must lie in (0, 2], got {alpha!r}")


def _default_ladder(S):
    return tuple(S / 2 ** k for k in (4, 3, 2, 1, 0))


@dataclass(frozen=True)
class PickandsParams:
    alpha: float
    a: float = 1.0
    eta: float = 0.0
    S: float = 128.0
    inner_step: float = 0.01
    n_rep: int = 10_000
    ladder: tuple | None = None
    method: str = "shifted"

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not self.a > 0:
            raise ParameterError(f"a: must be positive, got {self.a!r}")
        if not self.eta >= 0:
            raise ParameterError(f"eta: must be >= 0, got {self.eta!r}")
        if not self.S > 0:
            raise ParameterError(f"S: must be positive, got {self.S!r}")
        if not self.inner_step > 0:
            raise ParameterError(f"inner_step: must be positive, got {self.inner_step!r}")
        if int(self.n_rep) != self.n_rep or self.n_rep < 2:
            raise ParameterError(f"n_rep: must be an integer >= 2, got {self.n_rep!r}")
        if self.S < max(self.eta, self.inner_step if self.eta == 0 else 0.0):
            raise ParameterError("S: must be >= max(eta, inner_step)")
        if self.method not in METHODS:
            raise ParameterError(f"method: must be one of {METHODS}, got {self.method!r}")
        if self.ladder is not None:
            lad = tuple(float(s) for s in self.ladder)
            if not lad or any(s <= 0 for s in lad) or list(lad) != sorted(set(lad)) or lad[-1] != self.S:
                raise ParameterError("ladder: must be increasing positive horizons ending at S")
            object.__setattr__(self, "ladder", lad)

    @property
    def step(self) -> float:
        """Grid step in use: ``eta``, or for ``eta = 0`` the inner step capped so
        that ``step * (2a)**(1/alpha) <= 0.01``."""
        if self.eta > 0:
            return float(self.eta)
        return min(self.inner_step, MAX_SCALED_STEP / (2 * self.a) ** (1 / self.alpha))

    @property
    def horizons(self) -> tuple:
        """Ladder horizons snapped down to multiples of ``step`` so that every rung
        ends on a grid point; rungs shorter than one step are dropped."""
        lad = self.ladder if self.ladder is not None else _default_ladder(self.S)
        unit = self.step
        snapped = []
        for s in lad:
            k = int(math.floor(s / unit + 1e-9))
            if k >= 1 and (not snapped or k * unit > snapped[-1]):
                snapped.append(k * unit)
        return tuple(snapped)


@dataclass(frozen=True)
class PickandsEstimate:
    value: float
    std_error: float
    params: PickandsParams
    ladder: tuple  # (S, estimate, std_error) on the finest grid
    last_point: float
    last_point_error: float
    levels: tuple = ()  # (step, horizon-extrapolated estimate, std_error) per grid level
    discretization_band: float = 0.0
    seed: int = 0
    backend: str = field(default_factory=_kernels.backend)

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value > 0):
            raise NumericalError(f"Pickands estimate not positive/finite: {self.value!r}")
        if not self.std_error >= 0:
            raise NumericalError("Pickands std_error negative")


def _intercept_weights(horizons):
    x = 1.0 / np.asarray(horizons, dtype=np.float64)
    if x.size == 1:
        return np.ones(1)
    design = np.column_stack([np.ones_like(x), x])
    return np.linalg.pinv(design)[0]


def _rung_layout(params, h):
    """Stride per level and grid-point count per (level, rung)."""
    strides = (2, 1) if params.eta == 0 else (1,)
    counts = np.array([[int(math.floor(s / (q * h) + 1e-9)) + 1 for s in params.horizons] for q in strides])
    return strides, counts


def _path_grid(params):
    h = params.step / 2 if params.eta == 0 else params.step
    m = int(math.floor(params.S / h + 1e-9))
    return h, Grid.uniform(0.0, h, m + 1)


def _replicate_values(params, sampler, strides, counts, gen, n):
    """Per-replicate truncated-functional values, shape ``(n, levels, rungs)``."""
    paths = sampler.draw(gen, n)
    drift = _kernels.drift_table(paths.shape[1], sampler.grid.step, params.a, params.alpha)
    sigma = math.sqrt(2 * params.a)
    horizons = params.horizons
    out = np.empty((n, len(strides), len(horizons)))
    if params.method == "shifted":
        u = gen.random(n)
    for li, q in enumerate(strides):
        for ri, s in enumerate(horizons):
            cnt = counts[li, ri]
            stop = (cnt - 1) * q + 1
            if params.method == "shifted":
                anchors = q * np.minimum((u * cnt).astype(np.int64), cnt - 1)
                sums = _kernels.shifted_sums(paths, drift, anchors, stop, q, sigma)
                out[:, li, ri] = (cnt / s) / sums
            else:
                logsup = _kernels.drifted_log_sup(paths, drift, stop, q, sigma)
                out[:, li, ri] = np.exp(logsup) / s
    return out


def _mean_se(y):
    return float(np.mean(y)), float(np.std(y, ddof=1) / math.sqrt(y.size))


def estimate_pickands(params: PickandsParams, seed: int = 0, *, threads: int | None = 1,
                      stream: int = 0) -> PickandsEstimate:
    """Estimate ``H(alpha, a, eta)``; see the module docstring for the method."""
    h, grid = _path_grid(params)
    sampler = FBMSampler(params.alpha, grid)
    strides, counts = _rung_layout(params, h)

    def block(b, lo, hi):
        return _replicate_values(params, sampler, strides, counts, block_generator(seed, stream, b), hi - lo)

    x = np.concatenate(map_blocks(block, int(params.n_rep), PICKANDS_BLOCK, threads), axis=0)
    w = _intercept_weights(params.horizons)
    per_level = x @ w  # (n, levels)

    levels = []
    for li, q in enumerate(strides):
        levels.append((q * h, *_mean_se(per_level[:, li])))
    if params.eta == 0:
        p = params.alpha / 2
        r = 2.0 ** p
        y = (r * per_level[:, 1] - per_level[:, 0]) / (r - 1)
    else:
        y = per_level[:, 0]
    value, se = _mean_se(y)
    band = abs(value - levels[0][1]) if params.eta == 0 else 0.0

    finest = x[:, -1, :]
    ladder = tuple((float(s), *_mean_se(finest[:, k])) for k, s in enumerate(params.horizons))
    return PickandsEstimate(
        value=value,
        std_error=se,
        params=params,
        ladder=ladder,
        last_point=ladder[-1][1],
        last_point_error=ladder[-1][2],
        levels=tuple(levels),
        discretization_band=band,
        seed=int(seed),
    )


def nested_grid_suprema(alpha: float, a: float, eta: float, S: float, n_rep: int, seed: int,
                        factors=(1, 2), *, threads: int | None = 1) -> dict:
    """Per-replicate log-suprema of ``sqrt(2a) B(t) - a t**alpha`` over
    ``[0,S] ∩ (k*eta) Z`` for each factor ``k``, all from the same paths."""
    _check_alpha(alpha)
    if not eta > 0:
        raise ParameterError("eta: nested grids need eta > 0")
    m = int(math.floor(S / eta + 1e-9))
    sampler = FBMSampler(alpha, Grid.uniform(0.0, eta, m + 1))
    sigma = math.sqrt(2 * a)
    drift = _kernels.drift_table(m + 1, eta, a, alpha)

    def block(b, lo, hi):
        paths = sampler.draw(block_generator(seed, 0, b), hi - lo)
        return np.column_stack([_kernels.drifted_log_sup(paths, drift, m + 1, k, sigma) for k in factors])

    sups = np.concatenate(map_blocks(block, int(n_rep), PICKANDS_BLOCK, threads), axis=0)
    return {k: sups[:, i] for i, k in enumerate(factors)}


@dataclass(frozen=True, eq=False)
class PickandsTable:
    """``a -> H(alpha, a, eta)`` via ``a**(1/alpha) * H(alpha, 1, eta * a**(1/alpha))``,
    the unit-scale constants being interpolated in ``log eta'`` between nodes."""

    alpha: float
    eta: float
    nodes: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    horizons: np.ndarray = None
    estimates: tuple = ()

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        if nodes.size == 0 or nodes.size != vals.size:
            raise ParameterError("table: nodes and values must be nonempty and aligned")
        if self.eta == 0 and nodes.size != 1:
            raise ParameterError("table: eta = 0 uses a single base estimate")
        if self.eta > 0 and not np.all(nodes > 0):
            raise ParameterError("table: eta' nodes must be positive when eta > 0")
        if nodes.size > 1 and not np.all(np.diff(nodes) > 0):
            raise ParameterError("table: nodes must be increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "errors", np.asarray(self.errors, dtype=np.float64))
        if self.horizons is None:
            object.__setattr__(self, "horizons", np.full(nodes.size, np.nan))
        x = np.log(nodes) if self.eta > 0 else nodes
        y = np.log(vals)
        object.__setattr__(self, "_x", x)
        object.__setattr__(self, "_y", y)
        object.__setattr__(self, "_spline", CubicSpline(x, y) if nodes.size >= 4 else None)

    def _locate(self, eta_prime):
        ep = np.asarray(eta_prime, dtype=np.float64)
        lo, hi = self.nodes[0], self.nodes[-1]
        tol = 1e-10 * max(hi, 1.0)
        if np.any(ep < lo - tol) or np.any(ep > hi + tol):
            raise TableRangeError(
                f"table: eta' outside tabulated range [{lo!r}, {hi!r}] "
                f"(requested [{float(ep.min())!r}, {float(ep.max())!r}])"
            )
        return np.clip(ep, lo, hi)

    def base(self, eta_prime):
        """Interpolated ``H(alpha, 1, eta')`` and an absolute error estimate."""
        ep = self._locate(eta_prime)
        if self.nodes.size == 1:
            return np.full(ep.shape, self.values[0]), np.full(ep.shape, self.errors[0])
        x = np.log(ep)
        lin = np.interp(x, self._x, self._y)
        logv = self._spline(x) if self._spline is not None else lin
        val = np.exp(logv)
        k = np.clip(np.searchsorted(self._x, x), 1, self.nodes.size - 1)
        rel_mc = np.maximum(self.errors[k - 1] / self.values[k - 1], self.errors[k] / self.values[k])
        return val, val * (np.abs(logv - lin) + rel_mc)

    def _scaled(self, a):
        a = np.asarray(a, dtype=np.float64)
        if np.any(~(a > 0)):
            raise ParameterError("table: a must be positive")
        scale = a ** (1.0 / self.alpha)
        return scale, self.eta * scale

    def __call__(self, a):
        scale, ep = self._scaled(a)
        return scale * self.base(ep)[0]

    def error(self, a):
        scale, ep = self._scaled(a)
        return scale * self.base(ep)[1]

    @property
    def a_range(self):
        if self.eta == 0:
            return 0.0, math.inf
        return tuple((self.nodes[[0, -1]] / self.eta) ** self.alpha)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# format_version={TABLE_FORMAT_VERSION} eta={self.eta!r}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["alpha", "eta_prime", "S", "estimate", "std_error"])
            for ep, s, v, e in zip(self.nodes, self.horizons, self.values, self.errors):
                wr.writerow([format(x, ".17g") for x in (self.alpha, ep, s, v, e)])

    @classmethod
    def from_csv(cls, path) -> "PickandsTable":
        with open(path, encoding="utf-8") as fh:
            head = fh.readline().lstrip("#").split()
            meta = dict(item.split("=", 1) for item in head)
            if int(meta.get("format_version", -1)) != TABLE_FORMAT_VERSION:
                raise ParameterError(f"table: unsupported format_version {meta.get('format_version')!r}")
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ParameterError("table: no rows")
        col = lambda k: np.array([float(r[k]) for r in rows])
        return cls(float(rows[0]["alpha"]), float(meta["eta"]), col("eta_prime"), col("estimate"),
                   col("std_error"), col("S"))


def pickands_table(alpha: float, a_values, eta: float, quadrature_nodes: int = 9, *, seed: int = 0,
                   n_rep: int = 10_000, S: float = 128.0, inner_step: float = 0.01,
                   method: str = "shifted", threads: int | None = 1) -> PickandsTable:
    """Tabulate ``H(alpha, a, eta)`` over the range spanned by ``a_values``.

    ``quadrature_nodes`` unit-scale constants are estimated at geometrically
    spaced ``eta'`` between ``eta * min(a)**(1/alpha)`` and
    ``eta * max(a)**(1/alpha)``, all with the same seed. For ``eta = 0`` a single
    base estimate suffices.
    """
    a = np.asarray(a_values, dtype=np.float64).ravel()
    if a.size == 0 or np.any(~(a > 0)):
        raise ParameterError("a_values: must be nonempty and positive")
    if np.any(np.diff(a) < 0):
        raise ParameterError("a_values: must be sorted")
    _check_alpha(alpha)
    if eta == 0:
        nodes = np.array([0.0])
    else:
        lo = eta * a[0] ** (1 / alpha)
        hi = eta * a[-1] ** (1 / alpha)
        k = 1 if hi <= lo * (1 + 1e-12) else max(int(quadrature_nodes), 2)
        nodes = np.geomspace(lo, hi, k) if k > 1 else np.array([lo])
    estimates = []
    for ep in nodes:
        prm = PickandsParams(alpha=alpha, a=1.0, eta=float(ep), S=max(S, float(ep)), inner_step=inner_step,
                             n_rep=n_rep, method=method)
        estimates.append(estimate_pickands(prm, seed, threads=threads))
    return PickandsTable(
        alpha=float(alpha), eta=float(eta), nodes=nodes,
        values=np.array([e.value for e in estimates]),
        errors=np.array([e.std_error + e.discretization_band for e in estimates]),
        horizons=np.array([e.params.S for e in estimates]),
        estimates=tuple(estimates),
    )
