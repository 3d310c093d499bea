"""Per-replicate reduction kernels.

Each kernel has a numba implementation and a vectorised numpy one. The numba
path is used unless ``CHISQ_EXTREMES_DISABLE_NUMBA`` is set to a true value
(or numba is missing). Both are kept importable as ``*_numba``/``*_numpy`` for
the benchmark and the cross-check tests.
"""
from __future__ import annotations

import os

import numpy as np

DISABLE_ENV = "CHISQ_EXTREMES_DISABLE_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() not in {"1", "true", "yes", "on"}


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _numba_requested()


# --------------------------------------------------------------------------
# numpy implementations
#
# ``drift[d]`` is ``a * (d * h)**alpha`` on a uniform grid of step ``h`` that
# starts at 0, so the drift between grid indices k and j is drift[|k - j|].
# --------------------------------------------------------------------------

def shifted_sums_numpy(paths, drift, anchors, stop, stride, sigma):
    rows = np.arange(paths.shape[0])
    z = sigma * (paths[:, 0:stop:stride] - paths[rows, anchors][:, None])
    if np.all(anchors % stride == 0):
        # drift[|k - j|] is drift reversed down to j, then drift forward from 0
        for r, j in enumerate(anchors):
            z[r, : j // stride] -= drift[j:0:-stride]
            z[r, j // stride:] -= drift[0:stop - j:stride]
    else:
        idx = np.arange(0, stop, stride)
        z -= drift[np.abs(idx[None, :] - anchors[:, None])]
    z -= z.max(axis=1, keepdims=True)
    return np.exp(z).sum(axis=1)


def drifted_log_sup_numpy(paths, drift, stop, stride, sigma):
    z = sigma * paths[:, 0:stop:stride] - drift[0:stop:stride][None, :]
    return z.max(axis=1)


def chi2_grid_max_numpy(components, stride=1):
    x = components[:, :, ::stride]
    return np.einsum("irk,irk->rk", x, x).max(axis=1)


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)

    @_jit
    def shifted_sums_numba(paths, drift, anchors, stop, stride, sigma):
        nrow = paths.shape[0]
        out = np.empty(nrow)
        buf = np.empty((stop + stride - 1) // stride)
        for r in range(nrow):
            j = anchors[r]
            bj = paths[r, j]
            zmax = -np.inf
            i = 0
            for k in range(0, stop, stride):
                z = sigma * (paths[r, k] - bj) - drift[abs(k - j)]
                buf[i] = z
                if z > zmax:
                    zmax = z
                i += 1
            s = 0.0
            for q in range(i):
                z = buf[q] - zmax
                if z > -50.0:  # smaller terms are below one ulp of the sum
                    s += np.exp(z)
            out[r] = s
        return out

    @_jit
    def drifted_log_sup_numba(paths, drift, stop, stride, sigma):
        nrow = paths.shape[0]
        out = np.empty(nrow)
        for r in range(nrow):
            zmax = -np.inf
            for k in range(0, stop, stride):
                z = sigma * paths[r, k] - drift[k]
                if z > zmax:
                    zmax = z
            out[r] = zmax
        return out

    @_jit
    def chi2_grid_max_numba(components, stride=1):
        ncomp, nrow, npts = components.shape
        out = np.empty(nrow)
        for r in range(nrow):
            best = -np.inf
            for k in range(0, npts, stride):
                s = 0.0
                for i in range(ncomp):
                    x = components[i, r, k]
                    s += x * x
                if s > best:
                    best = s
            out[r] = best
        return out

else:  # pragma: no cover
    shifted_sums_numba = drifted_log_sup_numba = chi2_grid_max_numba = None


def _pick(name):
    return globals()[name + ("_numba" if USE_NUMBA else "_numpy")]


def drift_table(count, step, a, alpha):
    """``a * (d * step)**alpha`` for ``d = 0 .. count-1``."""
    d = np.arange(count, dtype=np.float64) * step
    if alpha == 1.0:
        return a * d
    if alpha == 2.0:
        return a * d * d
    return a * d ** alpha


def shifted_sums(paths, drift, anchors, stop, stride, sigma):
    """Sum of ``exp(z_k - max z)`` over grid indices ``0:stop:stride`` for each row,
    where ``z_k = sigma*(B_k - B_j) - drift[|k - j|]`` and ``j`` is the row's anchor.
    """
    return _pick("shifted_sums")(
        np.ascontiguousarray(paths, dtype=np.float64),
        np.ascontiguousarray(drift, dtype=np.float64),
        np.ascontiguousarray(anchors, dtype=np.int64),
        int(stop), int(stride), float(sigma),
    )


def drifted_log_sup(paths, drift, stop, stride, sigma):
    """Row-wise ``max_k sigma*B_k - drift[k]`` over grid indices ``0:stop:stride``."""
    return _pick("drifted_log_sup")(
        np.ascontiguousarray(paths, dtype=np.float64),
        np.ascontiguousarray(drift, dtype=np.float64),
        int(stop), int(stride), float(sigma),
    )


def chi2_grid_max(components, stride=1):
    """Row-wise max over grid points of the sum of squared components.

    ``components`` has shape ``(n_components, n_rows, n_points)``.
    """
    return _pick("chi2_grid_max")(np.ascontiguousarray(components, dtype=np.float64), int(stride))


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
