"""Time the numpy and numba backends of every hot kernel.

    python3 benchmarks/bench_kernels.py [--batch 64] [--repeat 20]

Shapes are the ones a baseline network sees during training.  The first
numba call of each kernel is excluded (JIT compile or cache load).
"""

import argparse
import time

import numpy as np

from ordpool import kernels as K


def timeit(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(batch, rng):
    x1 = rng.normal(size=(batch, 24, 24, 32)).astype(np.float32)
    x2 = rng.normal(size=(batch, 8, 8, 64)).astype(np.float32)
    w1 = np.full((32, 4), 0.25)
    w2 = np.full((64, 64), 1 / 64)
    xp = rng.normal(size=(batch, 12, 12, 32)).astype(np.float32)

    def prep(B):
        out1, p1 = B["ordinal_forward"](x1, w1, 2, 2, 2, 2)
        out2, p2 = B["ordinal_forward"](x2, w2, 8, 8, 8, 8)
        _, a = B["classic_forward"](x1, K.MAX, 2, 2, 2, 2)
        cols = B["im2col"](xp, 5, 5)
        return {
            "ordinal fwd 2x2": lambda: B["ordinal_forward"](x1, w1, 2, 2, 2, 2),
            "ordinal bwd 2x2": lambda: B["ordinal_backward"](out1, x1, w1, p1, 2, 2, 2, 2),
            "ordinal fwd 8x8": lambda: B["ordinal_forward"](x2, w2, 8, 8, 8, 8),
            "ordinal bwd 8x8": lambda: B["ordinal_backward"](out2, x2, w2, p2, 8, 8, 8, 8),
            "max fwd 2x2": lambda: B["classic_forward"](x1, K.MAX, 2, 2, 2, 2),
            "max bwd 2x2": lambda: B["classic_backward"](out1, a, K.MAX, x1.shape, 2, 2, 2, 2),
            "im2col 5x5": lambda: B["im2col"](xp, 5, 5),
            "col2im 5x5": lambda: B["col2im"](cols, xp.shape, 5, 5),
        }
    return prep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    prep = cases(args.batch, np.random.default_rng(0))
    np_cases = prep(K.NUMPY)
    nb_cases = prep(K.NUMBA) if K.NUMBA else {}
    print(f"{'kernel':18s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, fn in np_cases.items():
        t_np = timeit(fn, args.repeat) * 1e3
        if name in nb_cases:
            t_nb = timeit(nb_cases[name], args.repeat) * 1e3
            print(f"{name:18s} {t_np:10.2f} {t_nb:10.2f} {t_np / t_nb:7.1f}x")
        else:
            print(f"{name:18s} {t_np:10.2f} {'-':>10s}")


if __name__ == "__main__":
    main()
