"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Both paths are imported side by side, so the env flag is not needed here.
"""

import argparse
import time

import numpy as np

from apollo_optim import kernels
from apollo_optim._accel import HAVE_NUMBA
from apollo_optim.rng import Rng


def best_of(fn, repeat):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    if not HAVE_NUMBA:
        print("numba not installed (or disabled); both columns time the numpy path")

    key = 0x1234ABCD
    rows = []
    for n in (10_000, 1_000_000):
        loop = best_of(lambda: kernels.normals_loop(key, 0, n), args.repeat)
        vec = best_of(lambda: kernels.normals_numpy(key, 0, n), args.repeat)
        rows.append((f"normals n={n}", loop, vec))

    rng = Rng(1)
    for r, n in ((16, 256), (128, 4096)):
        R = rng.normal((r, n))
        M, V = np.zeros((r, n)), np.zeros((r, n))
        loop = best_of(lambda: kernels.moments_loop(R, M, V, 0.9, 0.999, 0.1, 0.001, 1e-8), args.repeat)
        vec = best_of(lambda: kernels.moments_numpy(R, M, V, 0.9, 0.999, 0.1, 0.001, 1e-8), args.repeat)
        rows.append((f"moments {r}x{n}", loop, vec))

    print(f"{'kernel':<22}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, loop, vec in rows:
        print(f"{name:<22}{loop * 1e3:>12.3f}{vec * 1e3:>12.3f}{vec / loop:>9.1f}x")


if __name__ == "__main__":
    main()
