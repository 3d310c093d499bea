import json
import math

import numpy as np
import pytest
from scipy.stats import norm

from chisq_extremes.errors import ModelError, ParameterError, TableRangeError
from chisq_extremes.gaussian_sim import ou_kernel
from chisq_extremes.pickands import PickandsTable
from chisq_extremes.tail import (
    GridSpec, LocalModel, adaptive_gauss_legendre, chi_square_tail, constant_model, sphere_area, sphere_integral,
    grid_tail_approx,
)
from oracles import chi3_tail


def flat_table(alpha, eta, value):
    return PickandsTable(alpha=alpha, eta=eta, nodes=np.array([eta]), values=np.array([value]),
                         errors=np.array([0.0]))


class RecordingSource:
    """Pickands source returning a**(1/alpha) and remembering every argument."""

    def __init__(self, alpha, eta=0.0):
        self.alpha, self.eta, self.seen = alpha, eta, []

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        self.seen.append(a.copy())
        return a ** (1 / self.alpha)


@pytest.mark.parametrize("u", [0.5, 4.0, 10.0, 50.0, 200.0])
def test_chi_square_tail_closed_forms(u):
    assert chi_square_tail(2, u) == pytest.approx(math.exp(-u / 2), rel=1e-12)
    assert chi_square_tail(1, u) == pytest.approx(2 * norm.sf(math.sqrt(u)), rel=1e-12)
    assert chi_square_tail(3, u) == pytest.approx(chi3_tail(u), rel=1e-12)


def test_chi_square_tail_examples():
    assert chi_square_tail(2, 10) == pytest.approx(0.006737947, rel=1e-9)
    assert chi_square_tail(1, 4) == pytest.approx(0.0455003, rel=1e-6)
    ratio = chi_square_tail(3, 50, "asymptotic") / chi_square_tail(3, 50)
    assert abs(ratio - 1) < 0.03


def test_chi_square_tail_validation():
    for args in [(0, 1.0), (1.5, 1.0), (2, 0.0), (2, -1.0)]:
        with pytest.raises(ParameterError):
            chi_square_tail(*args)
    with pytest.raises(ParameterError):
        chi_square_tail(2, 1.0, "bogus")


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2)
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


def test_sphere_integrals_circle():
    val, err = sphere_integral(2, lambda v: np.ones(len(v)))
    assert val == pytest.approx(2 * math.pi, rel=1e-12) and err < 1e-12
    val, _ = sphere_integral(2, lambda v: v[:, 0] ** 2)
    assert val == pytest.approx(math.pi, rel=1e-12)


def test_sphere_integrals_two_sphere():
    val, err = sphere_integral(3, lambda v: np.ones(len(v)))
    assert val == pytest.approx(4 * math.pi, rel=1e-12)
    val, err = sphere_integral(3, lambda v: v[:, 0] ** 2, seed=1)
    assert abs(val - 4 * math.pi / 3) < 4 * err


def test_sphere_integral_orthant_folding():
    f = lambda v: np.sqrt(1 + 3 * v[:, 0] ** 2)
    full, _ = sphere_integral(2, f)
    half, _ = sphere_integral(2, f, orthant=True)
    assert half == pytest.approx(full, rel=1e-10)
    full3, e3 = sphere_integral(3, f, resolution=40_000, seed=2)
    orth3, o3 = sphere_integral(3, f, resolution=40_000, seed=3, orthant=True)
    assert abs(full3 - orth3) < 4 * math.hypot(e3, o3)


def test_sphere_integral_one_dimension():
    val, _ = sphere_integral(1, lambda v: v[:, 0] ** 2 + v[:, 0])
    assert val == pytest.approx(2.0)


def test_sphere_integral_validation():
    with pytest.raises(ParameterError):
        sphere_integral(2, lambda v: v[:, 0], resolution=12)
    with pytest.raises(ParameterError):
        sphere_integral(3, lambda v: v[:, 0], method="angular")


def test_adaptive_gauss_legendre():
    val, err = adaptive_gauss_legendre(np.exp, 0.0, 1.0)
    assert val == pytest.approx(math.e - 1, rel=1e-12)
    assert adaptive_gauss_legendre(np.exp, 1.0, 1.0) == (0.0, 0.0)


def test_single_component_reduces_to_scalar_formula():
    H, a, u, T = 0.9, 2.0, 30.0, 1.5
    model = constant_model(ou_kernel(a), a, 1.0, 1, T)
    res = grid_tail_approx(model, GridSpec(0.0), u, flat_table(1.0, 0.0, H), convention="A")
    scalar = T * a * H * u * 2 * norm.sf(math.sqrt(u))
    assert res.probability == pytest.approx(2 * scalar, rel=1e-9)
    assert res.by_convention["B"] == pytest.approx(scalar, rel=1e-9)


def test_convention_factor_is_sphere_area():
    for n in (2, 3):
        model = constant_model(ou_kernel(), 1.0, 1.0, n, 1.0)
        res = grid_tail_approx(model, GridSpec(1.0), 40.0, flat_table(1.0, 1.0, 0.44))
        assert res.by_convention["A"] / res.by_convention["B"] == pytest.approx(sphere_area(n), rel=1e-12)


def test_sphere_argument_is_weighted_local_variance():
    src = RecordingSource(1.0)
    a_fns = [lambda t: 1 + t, lambda t: 3 + 0 * t]
    model = LocalModel(1.0, a_fns, [ou_kernel()] * 2, 1.0)
    grid_tail_approx(model, GridSpec(0.0), 30.0, src)
    seen = np.concatenate([s.ravel() for s in src.seen])
    assert seen.min() >= 1 - 1e-12 and seen.max() <= 4 + 1e-12


def test_monotone_in_threshold():
    model = constant_model(ou_kernel(), 1.0, 1.0, 2, 1.0)
    probs = [grid_tail_approx(model, GridSpec(1.0), u, flat_table(1.0, 1.0, 0.44)).probability for u in (8, 12, 16, 20)]
    assert all(x > y for x, y in zip(probs, probs[1:]))


def test_doubling_window_doubles_integral():
    src = flat_table(1.0, 0.0, 1.0)
    one = grid_tail_approx(constant_model(ou_kernel(), 1.0, 1.0, 2, 1.0), GridSpec(0.0), 30.0, src)
    two = grid_tail_approx(constant_model(ou_kernel(), 1.0, 1.0, 2, 2.0), GridSpec(0.0), 30.0, src)
    assert two.time_integral == pytest.approx(2 * one.time_integral, rel=1e-10)
    assert two.sphere_integral == pytest.approx(one.sphere_integral, rel=1e-10)


def test_rejects_nonpositive_local_variance():
    model = LocalModel(1.0, [lambda t: t - 0.5], [ou_kernel()], 1.0)
    with pytest.raises(ModelError):
        grid_tail_approx(model, GridSpec(0.0), 30.0, RecordingSource(1.0))


def test_rejects_small_threshold_and_mismatched_table():
    model = constant_model(ou_kernel(), 1.0, 1.0, 2, 1.0)
    with pytest.raises(ParameterError):
        grid_tail_approx(model, GridSpec(1.0), 1.0, flat_table(1.0, 1.0, 0.44))
    with pytest.raises(ParameterError):
        grid_tail_approx(model, GridSpec(1.0), 30.0, flat_table(1.0, 0.5, 0.44))
    with pytest.raises(ParameterError):
        grid_tail_approx(model, GridSpec(1.0), 30.0, flat_table(1.0, 1.0, 0.44), convention="C")


def test_table_range_error_propagates():
    table = PickandsTable(alpha=1.0, eta=1.0, nodes=np.array([1.0, 2.0]), values=np.array([0.44, 0.32]),
                          errors=np.zeros(2))
    model = constant_model(ou_kernel(9.0), 9.0, 1.0, 2, 1.0)
    with pytest.raises(TableRangeError):
        grid_tail_approx(model, GridSpec(1.0), 30.0, table)


def test_grid_spec():
    assert GridSpec(1.0).spacing(16.0, 2.0) == pytest.approx(0.25)
    assert len(GridSpec(1.0).realize(12.0, 1.0, 0.0, 1.0)) == 13
    with pytest.raises(ParameterError):
        GridSpec(0.0).realize(12.0, 1.0, 0.0, 1.0)
    with pytest.raises(ParameterError):
        GridSpec(-1.0)


def test_json_fields():
    res = grid_tail_approx(constant_model(ou_kernel(), 1.0, 1.0, 2, 1.0), GridSpec(1.0), 20.0,
                        flat_table(1.0, 1.0, 0.44))
    d = json.loads(res.to_json())
    assert set(d) == {"u", "eta", "convention", "sphere_integral", "time_integral", "chisq_tail", "probability",
                      "error_estimate"}
    assert d["probability"] == pytest.approx(0.44 * 20 * math.exp(-10), rel=1e-9)
