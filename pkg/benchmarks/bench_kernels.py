"""Time the numba and numpy paths of each hot kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The first numba call (compilation, or loading the on-disk cache) is excluded.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from ncftap import MultiMatrixAlgebra, random_market
from ncftap._accel import HAVE_NUMBA
from ncftap.ftap import payoff_subspace
from ncftap.kernels import mgs_extend, pair_residuals, supergradient_ascent
from ncftap.spectral import AffineSlice


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    alg = MultiMatrixAlgebra((6, 4, 2))
    cands = np.stack([alg.cvec(alg.random_element(rng)) for _ in range(alg.size)])
    yield "mgs_extend (56 x 56)", lambda nb: mgs_extend(np.zeros((0, alg.size)), cands, numba=nb)

    f, X = random_market(3, (6, 4, 2), 2)
    lev = f.levels[-1]
    rho = alg.flat(alg.identity())
    dX = alg.flat(X.increment(1))
    yield ("pair_residuals (56 basis pairs^2)",
           lambda nb: pair_residuals(rho, dX, lev.flat_basis, alg.block_dims, alg.layout.offsets,
                                     alg.trace_weights, numba=nb))

    f, X = random_market(11, (4, 3), 1)
    sub = payoff_subspace(X)
    A = X.algebra
    K = sub.basis_hvec
    ih = A.hvec(A.identity())
    p = ih - K @ (K.T @ ih)
    sl = AffineSlice(A, p / (p @ p), normals=np.column_stack([K, p / np.linalg.norm(p)]))
    dirs = sl.directions
    yield ("supergradient_ascent (2000 iters)",
           lambda nb: supergradient_ascent(sl.x0, dirs, A.layout, max_iter=2000, patience=2000, numba=nb))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba unavailable (or NCFTAP_DISABLE_NUMBA set); timing numpy only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':38s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speed-up':>9s}")
    for name, fn in cases(rng):
        t_np, out_np = best_of(lambda: fn(False), args.repeat)
        if HAVE_NUMBA:
            fn(True)  # compile / load cache
            t_nb, out_nb = best_of(lambda: fn(True), args.repeat)
            print(f"{name:38s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f}x")
        else:
            print(f"{name:38s} {1e3 * t_np:11.2f} {'-':>11s} {'-':>9s}")


if __name__ == "__main__":
    main()
