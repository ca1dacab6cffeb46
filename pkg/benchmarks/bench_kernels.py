"""Compare the numba and pure-numpy paths of the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Both variants are imported directly, so the PREB_SIM_DISABLE_NUMBA flag
does not matter here.  The first numba call (compilation) is excluded.
"""
import argparse
import time

import numpy as np

from prebsim import _kernels as K


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases():
    rng = np.random.default_rng(7)
    for n, k in ((256, 14), (2048, 128)):
        d = np.sort(rng.uniform(-4, 4, n))
        v0 = rng.uniform(0.1, 1.0, n)
        yield f"lanczos_diag n={n} k={k}", lambda f, d=d, v0=v0, k=k: f(d, v0, k), (K.lanczos_diag_numpy, K.lanczos_diag_numba)

    x = np.linspace(-4, 4, 4096)
    w = rng.normal(size=4096).astype(np.complex128)
    t = np.linspace(0, 20, 2001)
    yield "fourier_sum 4096 x 2001", lambda f: f(x, w, t), (K.fourier_sum_numpy, K.fourier_sum_numba)

    M = 10
    h = rng.normal(size=(M, M))
    h = h + h.T
    u = rng.normal(size=M - 1)
    yield "quadratic_many_body M=10", lambda f: f(h, u), (K.quadratic_many_body_numpy, K.quadratic_many_body_numba)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not K.HAS_NUMBA:
        print("numba is not importable; only the numpy path can run")
    print(f"{'kernel':32s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s}  max|diff|")
    for name, call, (f_np, f_nb) in cases():
        ref = call(f_np)
        if K.HAS_NUMBA:
            out = call(f_nb)  # compile
            pairs = zip(ref, out) if isinstance(ref, tuple) else [(ref, out)]
            diff = max(float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) for a, b in pairs)
            t_nb = best_of(lambda: call(f_nb), args.repeat)
        else:
            diff, t_nb = float("nan"), float("nan")
        t_np = best_of(lambda: call(f_np), args.repeat)
        print(f"{name:32s} {1e3 * t_np:12.2f} {1e3 * t_nb:12.2f} {t_np / t_nb:8.2f}  {diff:.2e}")


if __name__ == "__main__":
    main()
