"""Compare the compiled and pure-Python kernel backends.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Each case
reports the best-of-N wall time per backend and the speedup.
"""

import argparse
import timeit

import numpy as np

from mimocap import kernels
from mimocap.canonical import solve_canonical, transformed_transmit
from mimocap.channel import FIVE_CLUSTER_PATHS, build_channel_stats, draw_channels, iid_stats
from mimocap.optimizer import optimize_covariance


def cases():
    table = build_channel_stats(FIVE_CLUSTER_PATHS, 4, 4, 0.1)
    iid = iid_stats(4, 4, 1.0)
    eye = np.eye(4, dtype=complex)
    cq = transformed_transmit(table, eye)
    d0 = np.ones(table.L)
    h = draw_channels(table, np.random.default_rng(0), 4096)
    return {
        "fixed_point (iid 4x4)": lambda b: solve_canonical(iid, eye, backend=b),
        "fixed_point (5-path, 10 dB)": lambda b: kernels.get_backend(b).fixed_point(
            table.cr, cq, table.sigma2, d0, d0, 1e-10, 10_000, table.t),
        "batch_logdet (4096 draws)": lambda b: kernels.get_backend(b).batch_logdet(
            h, eye, 1.0 / table.sigma2),
        "optimize_covariance (5-path, 10 dB)": lambda b: optimize_covariance(table, backend=b),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'case':40s}" + "".join(f"{b:>12s}" for b in backends) + "   speedup")
    for name, fn in cases().items():
        best = {}
        for b in backends:
            fn(b)  # warm-up
            best[b] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
        row = f"{name:40s}" + "".join(f"{best[b] * 1e3:10.3f}ms" for b in backends)
        if "cython" in best:
            row += f"   {best['python'] / best['cython']:6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
