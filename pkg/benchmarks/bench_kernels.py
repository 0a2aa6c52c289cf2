"""Throughput comparison of the compiled kernels against the numpy fallback.

Runs the four hot paths (kernel propagation, static and dynamic path
sampling, interface dynamics) through the public entry points under both
backends, checks that the outputs agree bit for bit, and prints a timing
table.  The compiled path is warmed once before timing so JIT compilation
is not billed.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from rcmlab import _kernels
from rcmlab.environment import (DistSpec, constant_field, make_speed,
                                resampling_environment, sample_iid)
from rcmlab.glmodel import anharmonic_potential, evolve, flat_field
from rcmlab.heatkernel import solve_static
from rcmlab.lattice import build_box
from rcmlab.walker import sample_dynamic_endpoints, sample_static_endpoints


def _solver_case():
    box = build_box(2, 129, "periodic")
    field = sample_iid(box, DistSpec("log-uniform", (0.5, 2.0)), seed=7)
    speed = make_speed(field, "vsrw")

    def run():
        sol = solve_static(field, speed, box.center_vid, [2.0, 4.0])
        return sol.prob

    return run


def _static_walk_case():
    box = build_box(2, 65, "periodic")
    field = sample_iid(box, DistSpec("log-uniform", (0.5, 2.0)), seed=7)
    speed = make_speed(field, "csrw")

    def run():
        s = sample_static_endpoints(field, speed, box.center_vid, 4.0,
                                    50_000, seed=3)
        return s.vid, s.disp

    return run


def _dynamic_walk_case():
    box = build_box(2, 33, "periodic")
    env = resampling_environment(box, DistSpec("log-uniform", (0.5, 2.0)),
                                 rate=0.5, t_start=0.0, t_end=8.0, seed=5)

    def run():
        s = sample_dynamic_endpoints(env, box.center_vid, 0.0, 8.0,
                                     10_000, seed=3, allow_wrap=True)
        return s.vid, s.disp

    return run


def _langevin_case():
    box = build_box(3, 9, "absorbing")
    start = flat_field(box)
    pot = anharmonic_potential()

    def run():
        traj = evolve(start, pot, dt=1.0 / 300.0, t_end=4.0, seed=2,
                      frame_times=[4.0])
        return traj.final_phi

    return run


CASES = {
    "kernel-propagation": _solver_case,
    "static-paths": _static_walk_case,
    "dynamic-paths": _dynamic_walk_case,
    "interface-steps": _langevin_case,
}


def _as_tuple(result):
    if isinstance(result, tuple):
        return tuple(np.asarray(r) for r in result)
    return (np.asarray(result),)


def _time(run, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        run()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    if not _kernels.HAS_NUMBA:
        print("numba is not importable; timing the numpy fallback only")

    rows = []
    for name, build in CASES.items():
        run = build()
        _kernels.USE_NUMBA = False
        ref = _as_tuple(run())
        t_np = _time(run, args.repeat)
        if _kernels.HAS_NUMBA:
            _kernels.USE_NUMBA = True
            got = _as_tuple(run())     # first call also warms the JIT cache
            for a, b in zip(ref, got):
                if not np.array_equal(a, b):
                    raise AssertionError(f"{name}: backends disagree")
            t_nb = _time(run, args.repeat)
            rows.append((name, t_np, t_nb, t_np / t_nb))
        else:
            rows.append((name, t_np, None, None))

    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'numpy':>9}  {'numba':>9}  {'speedup':>8}")
    for name, t_np, t_nb, gain in rows:
        if t_nb is None:
            print(f"{name:<{width}}  {t_np:>8.3f}s  {'-':>9}  {'-':>8}")
        else:
            print(f"{name:<{width}}  {t_np:>8.3f}s  {t_nb:>8.3f}s  "
                  f"{gain:>7.1f}x")
    if _kernels.HAS_NUMBA:
        print("outputs agreed bit-for-bit on every case")


if __name__ == "__main__":
    main()
