"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--rows 400] [--features 20] [--repeat 3]

Both backends grow identical trees and agree to rounding on the elastic-net
sweep, so the script checks their outputs before reporting timings.
"""
import argparse
import time

import numpy as np

from catcoupon._core import available_backends, get_backend
from catcoupon.regressors.trees import BinMapper, presort


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(X, g, rows, order, mapper, codes, Xt):
    """{name: (kernel call, bitwise agreement expected)}."""
    n, p = X.shape
    tree = get_backend("python").build_tree(X, g, rows, 6, 1, p, 0, 0.0, 0.0, 7)
    return {
        "exact depth 6": (lambda k: k.build_tree(X, g, rows, 6, 1, p, 0, 0.0, 0.0, 7, order),
                          True),
        "exact full depth": (
            lambda k: k.build_tree(X, g, rows, -1, 1, p, 0, 0.0, 0.0, 7, order), True),
        "random full depth": (lambda k: k.build_tree(X, g, rows, -1, 1, p, 1, 0.0, 0.0, 7),
                              True),
        "histogram 31 leaves": (lambda k: k.build_hist_tree(
            codes, mapper.n_bins, mapper.bin_lower, mapper.bin_upper, g, rows, 31, -1, 5,
            1.0, 0.0), True),
        "apply 1000 rows": (lambda k: k.apply_tree(Xt, *tree), True),
        "elastic net sweeps": (lambda k: k.enet_descent(X, g, np.zeros(p), 0.0, 0.01, 0.01,
                                                        1e-8, 1000, True), False),
    }


def _agree(a, b, exact):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    if exact:
        return all(np.array_equal(u, v) for u, v in zip(a, b))
    return all(np.allclose(u, v, rtol=1e-8, atol=1e-10) for u, v in zip(a, b))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=400)
    ap.add_argument("--features", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    X = rng.normal(size=(args.rows, args.features))
    g = -(X[:, 0] + np.sin(X[:, 1]) + 0.3 * rng.normal(size=args.rows))
    rows = np.arange(args.rows)
    order = presort(X)
    mapper = BinMapper.fit(X, 64)
    codes = mapper.transform(X)

    backends = sorted(available_backends(), key=lambda b: b != "compiled")
    Xt = rng.normal(size=(1000, args.features))
    print(f"rows={args.rows} features={args.features} backends={', '.join(backends)}")
    if "compiled" not in backends:
        print("compiled extension not built; run `python3 setup.py build_ext --inplace`")
    print(f"{'kernel':<22}" + "".join(f"{b:>14}" for b in backends) + f"{'speed-up':>12}")
    for name, (fn, exact) in cases(X, g, rows, order, mapper, codes, Xt).items():
        outs = [fn(get_backend(b)) for b in backends]
        if not all(_agree(o, outs[0], exact) for o in outs[1:]):
            raise SystemExit(f"backends disagree on {name}")
        times = [_time(lambda b=b: fn(get_backend(b)), args.repeat) for b in backends]
        ratio = times[-1] / times[0] if len(times) == 2 else float("nan")
        print(f"{name:<22}" + "".join(f"{1e3 * t:>12.2f}ms" for t in times)
              + f"{ratio:>11.1f}x")


if __name__ == "__main__":
    main()
