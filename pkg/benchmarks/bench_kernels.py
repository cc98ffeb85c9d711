"""Time the numba and numpy paths of each kernel on the same inputs.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. The first
numba call is excluded (compilation or cache load).
"""

import argparse
import time

import numpy as np

from phaseflow import kernels
from phaseflow._accel import NUMBA_AVAILABLE
from phaseflow.core import Quartic


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_verlet(n_points=65536, n_steps=200):
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=n_points)
    p0 = rng.normal(size=n_points)
    kind, coeffs, table, tx0, th, tper = Quartic(0.1).force_encoding()

    def make(impl):
        def run():
            x, p = x0.copy(), p0.copy()
            status = np.full(n_points, -1, dtype=np.int64)
            impl(x, p, 1.0, 1e-3, n_steps, kind, coeffs, table, tx0, th, tper, status)
            return x, p
        return run

    return f"verlet {n_points} pts x {n_steps} steps", make(kernels.verlet_numba), make(kernels.verlet_numpy)


def bench_gather(n=256):
    rng = np.random.default_rng(1)
    coeffs = rng.normal(size=(n, n))
    ip = rng.uniform(-2, n + 1, size=n * n)
    ix = rng.uniform(-2, n + 1, size=n * n)

    def make(impl):
        def run():
            out = np.empty(ip.shape[0])
            impl(coeffs, ip, ix, True, out)
            return out
        return run

    return f"bspline3 gather {n}x{n}", make(kernels.bspline3_gather_numba), make(kernels.bspline3_gather_numpy)


def bench_binning(n_particles=1_000_000, n=256):
    rng = np.random.default_rng(2)
    x = rng.normal(size=n_particles) * 3
    p = rng.normal(size=n_particles) * 3
    w = np.full(n_particles, 1.0 / n_particles)

    def make(impl):
        def run():
            out = np.zeros((n, n))
            impl(x, p, w, -10.0, 20.0 / n, n, -10.0, 20.0 / n, n, False, out)
            return out
        return run

    return f"linear binning {n_particles} particles", make(kernels.bin_linear_numba), make(kernels.bin_linear_numpy)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if not NUMBA_AVAILABLE:
        print("numba is not importable; only the numpy path can run")
    print(f"{'kernel':40s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, fast, slow in (bench_verlet(), bench_gather(), bench_binning()):
        ref_fast = fast()  # warm-up / compile
        t_fast = _best(fast, args.repeat)
        t_slow = _best(slow, args.repeat)
        a = np.concatenate([np.ravel(v) for v in (ref_fast if isinstance(ref_fast, tuple) else (ref_fast,))])
        res = slow()
        b = np.concatenate([np.ravel(v) for v in (res if isinstance(res, tuple) else (res,))])
        diff = float(np.max(np.abs(a - b)))
        print(f"{name:40s} {t_fast:10.4f} {t_slow:10.4f} {t_slow / t_fast:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
