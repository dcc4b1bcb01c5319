"""Timing comparison between the compiled stepping kernels and the numpy
fallback.  Run directly:  python3 benchmarks/bench_kernels.py [--sizes 4,16,64]
"""

import argparse
import time

import numpy as np

from spectre import _kernels
from spectre._kernels import _reference


def _instance(n, seed):
    rng = np.random.default_rng(seed)
    q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    a = (q * rng.uniform(0.5, 9.0, n)) @ q.T
    return np.ascontiguousarray(a, dtype=np.complex128), np.ones(n, dtype=np.complex128)


def _time(fn, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="4,16,64", help="comma-separated matrix sizes")
    parser.add_argument("--steps", type=int, default=20000, help="integration steps per run")
    parser.add_argument("--n-freq", type=int, default=64, help="frequencies for the scan benchmark")
    args = parser.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]

    if not _kernels.HAVE_COMPILED:
        print("compiled kernel not available; timing the fallback only")

    print(f"{'n':>4} {'kernel':>10} {'step/s':>12} {'rk4 [s]':>10} {'scan [s]':>10} {'speedup':>8}")
    for n in sizes:
        a, f = _instance(n, seed=n)
        dt = 0.4 / np.sqrt(np.abs(a).sum(axis=1).max() + 1.0)
        rows = {}
        for name, mod in (("compiled", _kernels), ("fallback", _reference)):
            if name == "compiled" and not _kernels.HAVE_COMPILED:
                continue
            if name == "compiled" and _kernels.BACKEND != "compiled":
                rk4, scan = _kernels._compiled.rk4_evolve, _kernels._compiled.modulated_scan
            else:
                rk4, scan = mod.rk4_evolve, mod.modulated_scan
            t_rk4 = _time(lambda: rk4(a, f, dt, args.steps))
            w = rk4(a, f, dt, args.steps)[0]
            ks = np.linspace(0.3, 3.0, args.n_freq)
            rec = np.arange(99, w.shape[0], 100)
            t_scan = _time(lambda: scan(w, dt, ks, rec))
            rows[name] = (t_rk4, t_scan)
            print(
                f"{n:>4} {name:>10} {args.steps / t_rk4:>12.0f} {t_rk4:>10.4f} {t_scan:>10.4f}",
                end="",
            )
            if name == "fallback" and "compiled" in rows:
                print(f" {rows['fallback'][0] / rows['compiled'][0]:>7.1f}x")
            else:
                print(f" {'':>8}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
