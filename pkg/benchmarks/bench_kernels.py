"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 50]

Both implementations are called directly, so the DGPCL_DISABLE_NUMBA flag does
not matter here; it only decides which one the library binds.
"""
import argparse
import timeit

import numpy as np

from dgpcl import _accel
from dgpcl import acquisition as acq
from dgpcl import kernels as k


def bench(label, fn_nb, fn_np, args, repeat):
    fn_nb(*args)  # compile
    fn_np(*args)
    t_nb = min(timeit.repeat(lambda: fn_nb(*args), number=1, repeat=repeat))
    t_np = min(timeit.repeat(lambda: fn_np(*args), number=1, repeat=repeat))
    print(f"{label:<28}{t_nb * 1e3:>10.3f}{t_np * 1e3:>10.3f}{t_np / t_nb:>9.1f}x")


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=50)
    args = p.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numba ms':>10}{'numpy ms':>10}{'speedup':>10}")
    for n in (30, 100, 300):
        X = rng.uniform(size=(n, 2))
        y = rng.standard_normal(n)
        th = np.array([0.2, 0.5])
        bench(f"sym_kernel n={n}", k._sym_kernel_nb, k._sym_kernel_np, (X, th, 1.0, 1e-6), args.repeat)
        bench(f"unit_terms n={n}", k._unit_terms_nb, k._unit_terms_np, (X, th, 1e-6, y), args.repeat)
    Xc = rng.uniform(size=(1000, 2))
    bench("cross_kernel 1000x100", k._cross_kernel_nb, k._cross_kernel_np,
          (Xc, rng.uniform(size=(100, 2)), np.array([0.2, 0.5]), 1.0), args.repeat)
    for N in (200, 5000):
        a = np.round(rng.uniform(size=N), 2)
        b = rng.uniform(size=N)
        order = np.lexsort((-b, -a))
        bench(f"pareto scan N={N}", acq._front_scan_nb, acq._front_scan_np, (a, b, order), args.repeat)


if __name__ == "__main__":
    main()
