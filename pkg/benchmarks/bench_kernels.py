"""Time the numba kernels against their numpy fallbacks on representative inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The numpy fallback is what runs when CHISQ_EXTREMES_DISABLE_NUMBA=1 is set.
"""
import argparse
import timeit

import numpy as np

from chisq_extremes import _kernels


def cases():
    rng = np.random.default_rng(0)
    # Pickands inner loop: 64 Brownian paths on a 25 601-point grid (S = 128, step 0.005).
    m = 25_601
    paths = np.cumsum(rng.standard_normal((64, m)), axis=1) * np.sqrt(0.005)
    anchors = rng.integers(0, m, 64)
    for alpha in (1.0, 1.5):
        drift = _kernels.drift_table(m, 0.005, 1.0, alpha)
        yield (f"shifted_sums alpha={alpha:g} (64 x 25601)", "shifted_sums",
               (paths, drift, anchors, m, 1, np.sqrt(2)))
    yield ("drifted_log_sup (64 x 25601)", "drifted_log_sup", (paths, drift, m, 1, np.sqrt(2)))
    # Chi-square grid maximum: 2 components, 8192 replicates, 21 grid points.
    comps = rng.standard_normal((2, 8192, 21))
    yield ("chi2_grid_max (2 x 8192 x 21)", "chi2_grid_max", (comps, 1))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':34s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  max rel diff")
    for label, name, call_args in cases():
        fast = getattr(_kernels, name + "_numba")
        slow = getattr(_kernels, name + "_numpy")
        a, b = fast(*call_args), slow(*call_args)  # also triggers compilation
        diff = float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))
        t_fast = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat)) * 1e3
        t_slow = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:34s} {t_slow:10.2f} {t_fast:10.2f} {t_slow / t_fast:7.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
