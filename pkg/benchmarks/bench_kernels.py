"""Compare the compiled and pure-numpy kernel lanes.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Times the two hot kernels (2-D dominance counting and per-feature GLM
Wald fitting) in both lanes at tensor-realistic sizes and prints a
small table. The compiled lane is warmed once before timing so the
numbers exclude compilation.
"""

import time

import numpy as np

from fdr2d import _accel


def _time(fn, *args, repeat=5):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_pair_counts(kern_jit, kern_np, rng):
    rows = []
    for m, b, g in ((200, 50, 50), (1000, 100, 101), (2000, 200, 101)):
        tm = rng.gamma(1.5, size=m * (b + 1))
        tc = rng.gamma(1.5, size=m * (b + 1))
        t1 = np.quantile(tm, np.linspace(0, 1, g))
        t2 = np.quantile(tc, np.linspace(0, 1, g))
        t1 = np.unique(t1)
        t2 = np.unique(t2)
        args = (tm, tc, t1, t2)
        if kern_jit is not None:
            kern_jit.pair_exceed_counts(*args)  # warm compile
            jit_t = _time(kern_jit.pair_exceed_counts, *args)
        else:
            jit_t = None
        np_t = _time(kern_np.pair_exceed_counts, *args)
        rows.append((f"counts m={m} B={b} grid={t1.size}x{t2.size}", jit_t, np_t))
    return rows


def bench_wald(kern_jit, kern_np, rng):
    rows = []
    for m, family, code in ((300, "gaussian", 0), (300, "binomial", 1)):
        n = 100
        z = rng.standard_normal(n)
        x = 0.7 * z + rng.standard_normal(n)
        eta = 0.4 * x + 0.5 * z
        if family == "gaussian":
            ymat = eta[:, None] + rng.standard_normal((n, m))
        else:
            ymat = (rng.random((n, m)) < 1 / (1 + np.exp(-eta[:, None]))).astype(float)
        d_full = np.column_stack([np.ones(n), x, z])
        d_red = np.column_stack([np.ones(n), x])
        args = (d_full, d_red, ymat, 1, code, 0.0, 50, 1e-8)
        if kern_jit is not None:
            kern_jit.wald_pair_many(*args)
            jit_t = _time(kern_jit.wald_pair_many, *args, repeat=3)
        else:
            jit_t = None
        np_t = _time(kern_np.wald_pair_many, *args, repeat=3)
        rows.append((f"wald m={m} {family}", jit_t, np_t))
    return rows


def main():
    rng = np.random.default_rng(0)
    kern_np = _accel.build_kernel_set(False)
    kern_jit = _accel.build_kernel_set(True) if _accel.HAVE_NUMBA else None
    if kern_jit is None:
        print("numba lane unavailable (not installed or disabled); timing numpy lane only")
    rows = bench_pair_counts(kern_jit, kern_np, rng)
    rows += bench_wald(kern_jit, kern_np, rng)
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for name, jit_t, np_t in rows:
        jit_s = f"{jit_t * 1e3:8.2f}ms" if jit_t is not None else "      --"
        ratio = f"{np_t / jit_t:7.1f}x" if jit_t else "      --"
        print(f"{name:<{width}}  {jit_s:>10}  {np_t * 1e3:8.2f}ms  {ratio:>8}")


if __name__ == "__main__":
    main()
