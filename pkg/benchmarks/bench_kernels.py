#!/usr/bin/env python3
"""Time the numba kernel build against the pure-numpy build.

Run with numba enabled (the default environment):

    python3 benchmarks/bench_kernels.py

The script imports both builds from dphmm.kernels directly, so it does not
need DPHMM_DISABLE_NUMBA; that flag is for forcing the numpy build at
package runtime.
"""
import argparse
import time

import numpy as np

from dphmm.kernels import HAVE_NUMBA, IMPLEMENTATIONS


def make_problem(n, k, seed):
    rng = np.random.default_rng(seed)
    Q = rng.dirichlet(np.ones(k), size=k)
    mu = rng.dirichlet(np.ones(k))
    B = rng.random((n, k)) + 0.05
    u = rng.random(n)
    return mu, Q, B, u


def time_fn(fn, *args, repeats):
    fn(*args)  # warm-up (and JIT compile)
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    if not HAVE_NUMBA:
        print("numba build unavailable (disabled or not installed); "
              "only the numpy build will be timed")

    cases = [(200, 2), (2000, 2), (2000, 8), (20000, 4)]
    builds = [b for b in ("numpy", "numba") if b in IMPLEMENTATIONS]
    print(f"{'case':>12} {'kernel':>18} " + " ".join(f"{b:>12}" for b in builds)
          + ("   speedup" if len(builds) == 2 else ""))
    for n, k in cases:
        mu, Q, B, u = make_problem(n, k, seed=0)
        for name in ("forward_filter", "backward_messages", "ffbs"):
            times = {}
            for build in builds:
                impl = IMPLEMENTATIONS[build]
                if name == "forward_filter":
                    times[build] = time_fn(impl[name], mu, Q, B, repeats=args.repeats)
                elif name == "backward_messages":
                    _, c = IMPLEMENTATIONS[build]["forward_filter"](mu, Q, B)
                    times[build] = time_fn(impl[name], Q, B, c, repeats=args.repeats)
                else:
                    alpha, _ = IMPLEMENTATIONS[build]["forward_filter"](mu, Q, B)
                    times[build] = time_fn(impl[name], Q, alpha, u, repeats=args.repeats)
            row = f"{f'n={n},k={k}':>12} {name:>18} "
            row += " ".join(f"{times[b] * 1e6:>10.1f}us" for b in builds)
            if len(builds) == 2:
                row += f"   {times['numpy'] / times['numba']:>6.1f}x"
            print(row)


if __name__ == "__main__":
    main()
