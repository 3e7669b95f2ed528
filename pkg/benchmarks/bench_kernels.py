#!/usr/bin/env python3
"""Benchmark the compiled recursion kernels against the pure-Python fallback.

Runs the same trajectory workload (identical pre-generated data streams)
through both backends and reports steps per second and the speedup. The
Python fallback gets a proportionally shorter run so the script stays
quick; rates are still comparable because the per-step cost is flat.

Usage: python benchmarks/bench_kernels.py [--n 200000] [--dim 5]
"""

import argparse
import time

import numpy as np

from sgdinfer import _kernels
from sgdinfer.models import LinearRegressionModel, QuadraticModel
from sgdinfer.noise import SymmetricParetoNoise
from sgdinfer.rng import RngStream
from sgdinfer.sgd import DEFAULT_SCHEDULE, TrajectoryConfig, run_trajectory


def _workloads(dim):
    theta_star = np.linspace(-1.0, 1.0, dim)
    linreg = LinearRegressionModel(
        theta_star, np.eye(dim), SymmetricParetoNoise.homogeneous(1.5, 1.0, 1))
    quad = QuadraticModel(np.eye(dim), SymmetricParetoNoise.homogeneous(1.5, 1.0, dim))
    return {"linreg": linreg, "quadratic": quad}


def _time_run(oracle, n, seed):
    cfg = TrajectoryConfig(n=n, schedule=DEFAULT_SCHEDULE)
    start = time.perf_counter()
    stats = run_trajectory(oracle, cfg, RngStream(seed, 0))
    elapsed = time.perf_counter() - start
    return elapsed, stats


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200_000, help="steps for the compiled backend")
    ap.add_argument("--dim", type=int, default=5)
    ap.add_argument("--seed", type=int, default=12345)
    args = ap.parse_args()

    if "cython" not in _kernels.available_backends():
        print("compiled backend not available; build the extension first "
              "(pip install -e . --no-build-isolation)")
        return

    n_py = max(2_000, args.n // 100)
    print(f"dim={args.dim}, compiled n={args.n}, python n={n_py}\n")
    for name, oracle in _workloads(args.dim).items():
        _kernels.set_backend("cython")
        t_cy, stats_cy = _time_run(oracle, args.n, args.seed)
        rate_cy = args.n / t_cy

        _kernels.set_backend("python")
        t_py, _ = _time_run(oracle, n_py, args.seed)
        rate_py = n_py / t_py

        # same data stream, shorter python run: check agreement on a common prefix
        _kernels.set_backend("cython")
        _, stats_check = _time_run(oracle, n_py, args.seed)
        _kernels.set_backend("python")
        _, stats_pyfull = _time_run(oracle, n_py, args.seed)
        drift = np.max(np.abs(stats_check.theta_bar - stats_pyfull.theta_bar))

        print(f"{name:10s} compiled: {rate_cy/1e6:7.2f} M steps/s   "
              f"python: {rate_py/1e3:7.1f} k steps/s   "
              f"speedup: {rate_cy/rate_py:8.1f}x   agreement: {drift:.2e}")
    _kernels.set_backend("cython")


if __name__ == "__main__":
    main()
