import os
import subprocess
import sys

import numpy as np
import pytest

from chisq_extremes import _kernels

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture
def paths():
    rng = np.random.default_rng(0)
    return np.cumsum(rng.standard_normal((50, 201)), axis=1) * 0.1


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.3, 2.0])
@pytest.mark.parametrize("stride", [1, 2])
@needs_numba
def test_shifted_sums_agree(paths, alpha, stride):
    drift = _kernels.drift_table(paths.shape[1], 0.01, 1.0, alpha)
    anchors = stride * np.random.default_rng(1).integers(0, 100, paths.shape[0])
    args = (paths, drift, anchors, 201, stride, 1.4)
    np.testing.assert_allclose(_kernels.shifted_sums_numba(*args), _kernels.shifted_sums_numpy(*args), rtol=1e-12)


@pytest.mark.parametrize("alpha", [0.7, 1.0, 2.0])
@pytest.mark.parametrize("stride", [1, 3])
@needs_numba
def test_drifted_log_sup_agree(paths, alpha, stride):
    drift = _kernels.drift_table(paths.shape[1], 0.01, 0.5, alpha)
    args = (paths, drift, 151, stride, 1.4)
    np.testing.assert_allclose(_kernels.drifted_log_sup_numba(*args), _kernels.drifted_log_sup_numpy(*args),
                               rtol=1e-12, atol=1e-14)


def test_drift_table():
    np.testing.assert_allclose(_kernels.drift_table(4, 0.5, 2.0, 1.5), 2.0 * (0.5 * np.arange(4)) ** 1.5)
    assert _kernels.drift_table(3, 0.5, 1.0, 2.0).tolist() == [0.0, 0.25, 1.0]


def test_shifted_sums_direct_definition():
    rng = np.random.default_rng(3)
    paths = rng.standard_normal((3, 9))
    drift = _kernels.drift_table(9, 0.25, 1.0, 1.0)
    t = 0.25 * np.arange(9)
    anchors = np.array([0, 4, 8])
    for r, j in enumerate(anchors):
        z = 1.5 * (paths[r] - paths[r, j]) - np.abs(t - t[j])
        want = np.exp(z - z.max()).sum()
        assert _kernels.shifted_sums(paths, drift, anchors, 9, 1, 1.5)[r] == pytest.approx(want, rel=1e-13)


@pytest.mark.parametrize("stride", [1, 2, 5])
@needs_numba
def test_chi2_grid_max_agree(stride):
    comps = np.random.default_rng(2).standard_normal((3, 40, 23))
    np.testing.assert_allclose(_kernels.chi2_grid_max_numba(comps, stride), _kernels.chi2_grid_max_numpy(comps, stride),
                               rtol=1e-13)


def test_backend_name():
    assert _kernels.backend() in ("numba", "numpy")


@needs_numba
def test_shifted_sums_off_grid_anchor(paths):
    drift = _kernels.drift_table(paths.shape[1], 0.01, 1.0, 1.0)
    anchors = np.full(paths.shape[0], 7)
    args = (paths, drift, anchors, 201, 2, 1.4)
    np.testing.assert_allclose(_kernels.shifted_sums_numba(*args), _kernels.shifted_sums_numpy(*args), rtol=1e-12)


def test_env_flag_selects_numpy_backend():
    code = ("from chisq_extremes import _kernels as k, pickands as p;"
            "e = p.estimate_pickands(p.PickandsParams(alpha=1.0, eta=0.5, S=8.0, n_rep=200), seed=1);"
            "print(k.backend(), repr(e.value))")
    env = dict(os.environ, CHISQ_EXTREMES_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    name, value = out.stdout.split()
    assert name == "numpy"
    from chisq_extremes import pickands as p
    here = p.estimate_pickands(p.PickandsParams(alpha=1.0, eta=0.5, S=8.0, n_rep=200), seed=1).value
    assert float(value) == pytest.approx(here, rel=1e-12)
