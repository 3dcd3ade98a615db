"""Race the numba kernels against their numpy fallbacks.

Runs each hot kernel on training-shaped inputs and prints a per-kernel
timing table. The numba path is compiled (and cached) on the first call,
which is excluded from the timings.

    python benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from vfptrack import kernels
from vfptrack.backend import HAVE_NUMBA


def bench(fn, args, repeats):
    fn(*args)  # warm up / compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    d, c = 64, 8  # fusion block widths at desk scale
    grid = rng.normal(size=(c, 8, 8))
    conv_w = rng.normal(size=(d, c, 3, 3))
    conv_b = rng.normal(size=d)
    gout = rng.normal(size=(d, 8, 8))

    n = 193  # prime length: the worst case for the mixed-radix path
    rows = rng.normal(size=(4, n)) + 1j * rng.normal(size=(4, n))
    subs = rng.normal(size=(3, 4, 64)) + 1j * rng.normal(size=(3, 4, 64))

    cases = [
        ("conv2d_fwd", (grid, conv_w, conv_b), kernels.conv2d_fwd_numpy,
         getattr(kernels, "conv2d_fwd_numba", None)),
        ("conv2d_bwd_x", (gout, conv_w), kernels.conv2d_bwd_x_numpy,
         getattr(kernels, "conv2d_bwd_x_numba", None)),
        ("conv2d_bwd_w", (gout, grid), kernels.conv2d_bwd_w_numpy,
         getattr(kernels, "conv2d_bwd_w_numba", None)),
        ("dft_block(193)", (rows,), kernels.dft_block_numpy,
         getattr(kernels, "dft_block_numba", None)),
        ("ct_combine(192)", (subs, 192), kernels.ct_combine_numpy,
         getattr(kernels, "ct_combine_numba", None)),
    ]

    print(f"{'kernel':<16} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name, arrs, f_np, f_nb in cases:
        t_np = bench(f_np, arrs, args.repeats)
        if HAVE_NUMBA and f_nb is not None:
            t_nb = bench(f_nb, arrs, args.repeats)
            out_np, out_nb = f_np(*arrs), f_nb(*arrs)
            assert np.allclose(out_np, out_nb, atol=1e-10), name
            print(f"{name:<16} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us {t_np / t_nb:>8.2f}x")
        else:
            print(f"{name:<16} {t_np * 1e6:>10.1f}us {'n/a':>12} {'':>9}")


if __name__ == "__main__":
    main()
