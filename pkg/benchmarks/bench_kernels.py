"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from gmiplan import kernels


def cases(rng):
    k, n = 16, 4096
    buf = rng.standard_normal((k, n))
    q, r = divmod(n, k)
    bounds = np.concatenate([[0], np.cumsum([q + (i < r) for i in range(k)])]).astype(np.int64)
    sizes = np.array([240.0, 32.0, 4.0])
    arrivals = np.sort(rng.uniform(0, 1e4, 50_000))
    costs = rng.uniform(0, 0.5, 50_000)
    return {
        "ring_allreduce 16x4096": lambda b: kernels.ring_allreduce(buf.copy(), bounds, backend=b),
        "agent_timeline 50k records": lambda b: kernels.agent_timeline(50_000, 7.0, 0.3, 4, sizes, 30.0, 0.05,
                                                                      backend=b),
        "fifo_service 50k jobs": lambda b: kernels.fifo_service(arrivals, costs, backend=b),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the fallback is timed")
    print(f"{'kernel':<30}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases(np.random.default_rng(0)).items():
        best = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) for b in backends}
        row = f"{name:<30}" + "".join(f"{best[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) > 1:
            row += f"{best['python'] / best['cython']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
