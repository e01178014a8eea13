#!/usr/bin/env python3
"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from mampc import _backend
from mampc.plants import QuadrupleTank, SofcStack
from mampc.qpcore import ALPHA, RHO, SIGMA


def admm_case(d=20, rows=40, seed=0):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((d, d))
    H = M @ M.T + np.eye(d)
    A = rng.standard_normal((rows, d))
    b = rng.uniform(0.5, 1.5, rows)
    f = rng.standard_normal(d)
    G = np.linalg.inv(H + SIGMA * np.eye(d) + RHO * A.T @ A)
    return G, np.zeros(d), A, b, f


def bench_admm(mod, case, iters=500):
    G, g0, A, b, f = case

    def run():
        v = np.zeros(G.shape[0])
        z = np.minimum(A @ v, b)
        y = np.zeros(A.shape[0])
        mod.admm_iterate(G, g0, A, b, f, v, z, y, RHO, SIGMA, ALPHA, iters, 1e-14, 10 ** 9, 1e6)
    return run


def bench_tank(mod):
    plant = QuadrupleTank()
    prm = plant.params.packed()
    h = plant.steady_state()
    nu = np.array([55.0, 45.0])
    return lambda: mod.tank_rk4(h, nu, prm, 1.0, 100)


def bench_sofc(mod):
    plant = SofcStack()
    prm = plant.params.packed()
    x = plant.steady_state()
    return lambda: mod.sofc_rk4(x, 1.26, 5.5, plant.params.current, prm, 5e-4, 100)


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = [("python", _backend.python_kernels)]
    if _backend.compiled_kernels is not None:
        backends.append(("compiled", _backend.compiled_kernels))
    else:
        print("compiled extension not importable; timing the fallback only")

    case = admm_case()
    cases = {
        "admm 500 it (d=20, 40 rows)": lambda mod: bench_admm(mod, case),
        "tank rk4 100 steps": bench_tank,
        "sofc rk4 100 steps": bench_sofc,
    }
    print(f"{'kernel':32s}" + "".join(f"{name:>14s}" for name, _ in backends) + f"{'speedup':>10s}")
    for label, make in cases.items():
        times = []
        for _, mod in backends:
            fn = make(mod)
            n, _ = timeit.Timer(fn).autorange()
            times.append(min(timeit.repeat(fn, number=n, repeat=args.repeat)) / n)
        row = f"{label:32s}" + "".join(f"{t * 1e6:12.1f}us" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
