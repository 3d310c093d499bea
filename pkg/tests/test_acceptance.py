"""Acceptance criteria, each run at its stated tolerance.

Seeds are fixed constants chosen before any run; they are never tuned.
Every criterion prints one PASS/FAIL line (also collected in the terminal
summary under "acceptance criteria").
"""
import math
import time

import numpy as np
import pytest

from chisq_extremes.cli import replay, run
from chisq_extremes.config import ExperimentConfig
from chisq_extremes.gaussian_sim import Grid, fbm_covariance, fbm_sample
from chisq_extremes.mc import convergence_ladder, nested_grid_maxima, ou_model, sup_exceedance_mc
from chisq_extremes.pickands import PickandsParams, estimate_pickands, nested_grid_suprema, pickands_table
from chisq_extremes.scanstat import (
    ScanWindow, local_variance_coeffs, pvalue_mc, pvalue_asymptotic, scan_pickands_table, verify_local_stationarity,
)
from chisq_extremes.tail import GridSpec, chi_square_tail

pytestmark = pytest.mark.acceptance

SEED = 1
_cache = {}


def unit_estimates():
    """Pickands estimates at a = 1 for alpha in {1, 2}, shared by criteria 1 and 2."""
    if "unit" not in _cache:
        t0 = time.perf_counter()
        est = {alpha: estimate_pickands(PickandsParams(alpha=alpha, S=128.0, inner_step=0.01, n_rep=10_000), SEED)
               for alpha in (1.0, 2.0)}
        _cache["unit"] = est, time.perf_counter() - t0
    return _cache["unit"]


def test_c1_pickands_constants(report):
    est, elapsed = unit_estimates()
    e1, e2 = est[1.0], est[2.0]
    ok1 = 0.95 <= e1.value <= 1.05
    ok2 = 0.536 <= e2.value <= 0.593
    ok3 = elapsed <= 600
    detail = (f"H_1 = {e1.value:.4f} +- {e1.std_error:.4f} (band {e1.discretization_band:.4f}), "
              f"H_2 = {e2.value:.4f} +- {e2.std_error:.4f}, 1/sqrt(pi) = {1 / math.sqrt(math.pi):.4f}, "
              f"runtime {elapsed:.0f}s")
    assert report("C1 Pickands constants", ok1 and ok2 and ok3, detail)


def test_c2_scaling_identity(report):
    est, _ = unit_estimates()
    lines, oks = [], []
    for alpha in (1.0, 2.0):
        big = estimate_pickands(PickandsParams(alpha=alpha, a=4.0, S=128.0, inner_step=0.01, n_rep=10_000), SEED + 1)
        factor = 4 ** (1 / alpha)
        diff = abs(big.value - factor * est[alpha].value)
        se = math.hypot(big.std_error, factor * est[alpha].std_error)
        oks.append(diff <= 2 * se)
        lines.append(f"alpha={alpha:g}: |{big.value:.4f} - {factor:g}*{est[alpha].value:.4f}| = {diff:.4f} "
                     f"vs 2se = {2 * se:.4f}")
    assert report("C2 scaling identity", all(oks), "; ".join(lines))


def test_c3_nested_grid_dominance(report):
    sups = nested_grid_suprema(1.0, 1.0, 0.5, 128.0, 10_000, SEED, factors=(1, 2))
    frac_p = float(np.mean(sups[2] <= sups[1]))
    maxima = nested_grid_maxima(ou_model(), GridSpec(1.0), 20.0, 10_000, SEED, factors=(1, 2))
    frac_m = float(np.mean(maxima[2] <= maxima[1]))
    ok = frac_p == 1.0 and frac_m == 1.0
    assert report("C3 nested-grid dominance", ok,
                  f"pickands {frac_p:.2%}, sup_exceedance_mc {frac_m:.2%} of 10^4 replicates")


def test_c4_chi_square_tails(report):
    digits = []
    for u in (1.0, 10.0, 50.0):
        got, want = chi_square_tail(2, u), math.exp(-u / 2)
        digits.append(abs(got - want) / want)
    ratio = chi_square_tail(3, 50.0) / chi_square_tail(3, 50.0, "asymptotic")
    ok = max(digits) <= 1e-12 and abs(ratio - 1) <= 0.03
    assert report("C4 chi-square tails", ok,
                  f"max rel err at n=2 {max(digits):.1e}; n=3 exact/asymptotic at u=50 = {ratio:.4f}")


def test_c5_ou_ladder(report):
    table = pickands_table(1.0, [1.0], 1.0, 9, seed=SEED, n_rep=100_000)
    model, grid = ou_model(n=2, a=1.0, T=1.0), GridSpec(1.0)
    u_values = [12.0, 16.0, 20.0]
    t0 = time.perf_counter()
    direct = convergence_ladder(model, grid, u_values, 1_000_000, SEED, table)
    cond = convergence_ladder(model, grid, u_values, 1_000_000, SEED, table, method="conditional")
    elapsed = time.perf_counter() - t0
    win = cond.verdict
    r = cond.ratios[win]
    # Both simulation methods must agree rung by rung.
    agree = all(abs(d.probability - c.probability) <= 4 * math.hypot(
        math.sqrt(d.probability * (1 - d.probability) / d.n_rep), c.std_error) for d, c in zip(direct.mc, cond.mc))
    ok = (cond.trend_decreasing[win] and 0.7 <= r[-1] <= 1.4 and direct.verdict == win
          and 0.7 <= direct.ratios[win][-1] <= 1.4 and agree and elapsed <= 1800)
    fmt = lambda xs: ", ".join(f"{x:.3f}" for x in xs)
    detail = (f"winner {win}; conditional MC ratios B [{fmt(cond.ratios['B'])}], A [{fmt(cond.ratios['A'])}]; "
              f"direct MC ratios B [{fmt(direct.ratios['B'])}] (trend {direct.trend_decreasing['B']}); "
              f"methods agree {agree}; runtime {elapsed:.0f}s")
    assert report("C5 OU convergence ladder", ok, detail)


def test_c6_scan_statistic(report):
    fd_ok, worst = True, 0.0
    for t in (0.3, 0.5, 0.7):
        targets = local_variance_coeffs(t)
        for which in (1, 2):
            rel = abs(verify_local_stationarity(which, t, [1e-5])[0] / targets[which - 1] - 1)
            worst = max(worst, rel)
            fd_ok &= rel <= 0.01
    table = scan_pickands_table(0.2, 0.8, seed=SEED, n_rep=100_000)
    ratios, direct = {}, {}
    for u in (20.0, 25.0):
        w = ScanWindow(0.2, 0.8, u)
        approx = pvalue_asymptotic(w, table)
        est = pvalue_mc(w, 1_000_000, SEED, method="conditional")
        ratios[u] = {c: v / est.probability for c, v in approx.by_convention.items()}
        if u == 20.0:
            d = pvalue_mc(w, 1_000_000, SEED)
            direct = {c: v / d.probability for c, v in approx.by_convention.items()}
    win = min(ratios[20.0], key=lambda c: abs(ratios[20.0][c] - 1))
    r20, r25 = ratios[20.0][win], ratios[25.0][win]
    ok = (fd_ok and 0.6 <= r20 <= 1.6 and 0.6 <= direct[win] <= 1.6 and abs(r25 - 1) < abs(r20 - 1))
    detail = (f"finite-difference worst rel err {worst:.1e}; convention {win}: conditional MC ratio {r20:.4f} "
              f"at u=20, {r25:.4f} at u=25; direct MC ratio {direct[win]:.3f} at u=20; "
              f"convention A {ratios[20.0]['A']:.2f}")
    assert report("C6 scan statistic", ok, detail)


def test_c7_sampler_fidelity(report):
    n_rep = 100_000
    grid = Grid.uniform(0.0, 1 / 32, 33)
    bound = 5 * math.sqrt(2 / n_rep)
    devs = []
    for alpha in (0.5, 1.0, 1.5):
        x = fbm_sample(alpha, grid, n_rep, SEED).values
        emp = x.T @ x / n_rep
        t = grid.points
        devs.append(float(np.max(np.abs(emp - fbm_covariance(alpha, t[:, None], t[None, :])))))
    u = 4.0
    target = math.exp(-u / 2)
    covered = 0
    for rep in range(100):
        est = sup_exceedance_mc(ou_model(), GridSpec(1.0), u, 10_000, SEED * 1000 + rep, grid=Grid([0.5]))
        covered += est.ci[0] <= target <= est.ci[1]
    ok = max(devs) <= bound and covered >= 93
    assert report("C7 sampler fidelity", ok,
                  f"fBm max cov deviation {max(devs):.4f} (bound {bound:.4f}); CI coverage {covered}/100")


def test_c8_replay_across_threads(report, tmp_path):
    configs = {
        "pickands": {"alpha": 1.0, "eta": 0.0, "S": 16.0, "n_rep": 500},
        "mc": {"u": 12.0, "n_rep": 200_000},
        "compare": {"u_values": [12.0, 16.0], "n_rep": 200_000, "pickands_n_rep": 2000, "quadrature_nodes": 4},
        "scanstat": {"u": 20.0, "n_rep": 200_000, "pickands_n_rep": 2000, "quadrature_nodes": 4},
        "tail": {"u": [16.0, 20.0], "pickands_n_rep": 2000, "quadrature_nodes": 4},
    }
    results = []
    for command, params in configs.items():
        cfg = ExperimentConfig(command, params, seed=SEED, threads=1, out_dir=str(tmp_path / command))
        _, paths = run(cfg)
        results.append(all(replay(paths[0], threads=k)[1] for k in (1, 4, 8)))
    ok = all(results)
    assert report("C8 replay across threads", ok,
                  f"{sum(results)}/{len(results)} artifacts bit-identical at threads 1, 4, 8")
