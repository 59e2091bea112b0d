#!/usr/bin/env python3
"""Timing comparison of the compiled and pure NumPy kernel lanes.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Sizes mirror the production workloads: the Crank-Nicolson sweep at the
acceptance grid, path recursions at Monte Carlo scale, and the stopped
integral scan at replication-study scale.
"""

import argparse
import time

import numpy as np

from ouportfolio.kernels import available_backends


def time_call(fn, *args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        started = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - started)
    return best


def cn_case(n_t=400, n_y=201):
    r = np.random.default_rng(0)
    a_lo = 0.3 * r.random(n_y - 1)
    a_up = 0.3 * r.random(n_y - 1)
    a_d = -2.0 + 0.02 * r.random(n_y)
    dt = 1.0 / n_t
    return (
        -0.5 * dt * a_lo, 1.0 - 0.5 * dt * a_d, -0.5 * dt * a_up,
        0.5 * dt * a_lo, 1.0 + 0.5 * dt * a_d, 0.5 * dt * a_up,
        r.random((n_t + 1, n_y)), np.ones(n_y), dt,
    )


def ou_case(n_paths=4096, n_steps=1000):
    z = np.random.default_rng(1).standard_normal((n_paths, n_steps))
    return 0.0, 0.995, 0.0316, z


def stop_case(n_paths=4096, n_steps=5000):
    z = np.random.default_rng(2).standard_normal((n_paths, n_steps))
    return 0.0, 0.995, 0.0316, z, 1e-3, 0.0588


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    lanes = available_backends()
    if "native" not in lanes:
        print("compiled lane not built; showing pure lane only")

    cases = [
        ("cn_sweep 400x201", "cn_sweep", cn_case()),
        ("ou_paths 4096x1000", "ou_paths", ou_case()),
        ("ou_stop_stats 4096x5000", "ou_stop_stats", stop_case()),
    ]
    print(f"{'kernel':<26} " + " ".join(f"{name:>12}" for name in lanes) + "  speedup")
    for label, fn_name, case_args in cases:
        times = {}
        for lane_name, lane in lanes.items():
            times[lane_name] = time_call(getattr(lane, fn_name), *case_args, repeat=args.repeat)
        row = f"{label:<26} " + " ".join(f"{times[name] * 1e3:>10.2f}ms" for name in lanes)
        if "native" in times:
            row += f"  {times['pure'] / times['native']:>6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
