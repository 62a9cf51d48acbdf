"""Compare the compiled and numpy Riccati kernels.

Usage: python3 benchmarks/bench_riccati.py [--sizes 2 6 20 50] [--repeat 5]

Times one full value iteration to convergence for random stabilizable
systems of each size and reports the best of ``--repeat`` runs.
"""

import argparse
import time

import numpy as np

from selftune.kernels import available_backends


def system(n, k, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A *= 1.1 / np.max(np.abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((n, k))
    return A, B, np.eye(n), np.eye(k)


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[2, 6, 20, 50])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy kernel is available")
    print(f"{'N':>4} {'K':>3} {'iters':>6} " + " ".join(f"{name:>12}" for name in backends) + "  speedup")
    for n in args.sizes:
        k = max(1, n // 10)
        A, B, Q, R = system(n, k)
        times, results = {}, {}
        for name, mod in backends.items():
            times[name], results[name] = best_time(
                lambda mod=mod: mod.dare_iterate(A, B, Q, R, 1e-9, 10000, 1e12), args.repeat)
        iters = results["python"][1]
        if "compiled" in results:
            assert np.allclose(results["compiled"][0], results["python"][0], rtol=1e-9, atol=1e-9)
        cols = " ".join(f"{times[name] * 1e3:10.3f}ms" for name in backends)
        speed = f"{times['python'] / times['compiled']:7.1f}x" if "compiled" in times else ""
        print(f"{n:>4} {k:>3} {iters:>6} {cols}  {speed}")


if __name__ == "__main__":
    main()
