"""Time the compiled kernels against their numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from acoustic_occupancy import kernels


def cases(rng):
    n, T = 15, 2000
    log_pi = np.log(np.full(n, 1.0 / n))
    log_a = np.log(rng.dirichlet(np.ones(n), size=n))
    ll = rng.normal(size=(T, n))
    X = rng.normal(size=(2000, 60))
    means = rng.normal(size=(8, 60))
    var = rng.uniform(0.5, 2.0, size=(8, 60))
    log_w = np.log(np.full(8, 1 / 8))
    return {
        "viterbi_log (T=2000, n=15)": ("viterbi_log", (log_pi, log_a, ll)),
        "forward_log (T=2000, n=15)": ("forward_log", (log_pi, log_a, ll)),
        "backward_log (T=2000, n=15)": ("backward_log", (log_a, ll)),
        "gmm_log_joint (T=2000, M=8, D=60)": ("gmm_log_joint", (X, log_w, means, var)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(sorted(backends))}")
    header = f"{'kernel':36s}" + "".join(f"{name:>12s}" for name in sorted(backends))
    if len(backends) > 1:
        header += f"{'speedup':>10s}"
    print(header)
    for label, (fn, inputs) in cases(np.random.default_rng(0)).items():
        best = {}
        for name, module in sorted(backends.items()):
            f = getattr(module, fn)
            best[name] = min(timeit.repeat(lambda: f(*inputs), number=1, repeat=args.repeat))
        row = f"{label:36s}" + "".join(f"{best[n] * 1e3:10.2f}ms" for n in sorted(best))
        if "cython" in best:
            row += f"{best['python'] / best['cython']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
