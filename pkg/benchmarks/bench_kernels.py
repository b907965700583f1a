"""Compare the jitted hot kernels against the pure-numpy fallback.

Runs each kernel in the current mode; launch twice to compare:

    python benchmarks/bench_kernels.py            # numba (default)
    RCMLAB_NO_NUMBA=1 python benchmarks/bench_kernels.py   # numpy fallback

Both modes produce numerically equivalent results; the printed checksums
make a cross-mode comparison easy.
"""

import os
import time

import numpy as np

import rcmlab as R
from rcmlab import _accel
from rcmlab.lattice import LatticeBox


def bench(label, fn, repeat=5, warmup=1):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    best = min(times)
    print(f"{label:<44} {best * 1e3:9.2f} ms   checksum {out:.12e}")
    return best


def main():
    mode = "numba" if _accel.USE_NUMBA else "numpy-fallback"
    print(f"mode: {mode}  (set RCMLAB_NO_NUMBA=1 for the fallback)\n")

    # semigroup sweep on a mid-size box
    box = LatticeBox((0, 0), 300, 2)
    omega = R.generate(R.EnvironmentLaw("pareto_mixture", seed=1), box)
    op = R.BoxOperator(omega)
    u = np.zeros(len(box))
    u[box.index_of((0, 0))] = 1.0
    nxt = np.empty_like(u)
    y = np.zeros_like(u)

    def matvec():
        cur = u.copy()
        for _ in range(50):
            op.apply_p_acc(cur, nxt, y, 1e-3)
            cur, nxt[:] = nxt, cur
        return float(np.sum(cur))

    bench("substochastic sweep (601^2 cells, 50 steps)", matvec)

    def kernel():
        col = R.heat_kernel(omega, (0, 0), 8.0, R.SolverConfig(max_mass_leak=1e-6))
        return float(col.values[box.index_of((0, 0))])

    bench("heat kernel column at t=8", kernel)

    wbox = LatticeBox((0, 0), 64, 2)
    wenv = R.generate(R.EnvironmentLaw("pareto_mixture", seed=2), wbox)

    def walks():
        k = R.empirical_kernel(wenv, (0, 0), 4.0, 100000, seed=3)
        return float(np.max(k.values))

    bench("Gillespie endpoints (1e5 paths, t=4)", walks)

    gbox = LatticeBox((0, 0), 500, 2)

    def genenv():
        f = R.generate(R.EnvironmentLaw("pareto_mixture", seed=4), gbox)
        return float(np.mean(f.values))

    bench("environment generation (2x10^6 bonds)", genenv)


if __name__ == "__main__":
    main()
