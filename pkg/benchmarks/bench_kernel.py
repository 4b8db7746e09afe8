"""Compiled vs pure-Python simplex kernel on the LPs the library actually builds.

    python benchmarks/bench_kernel.py [--repeat N]
"""

import argparse
import time

from fairalloc.feasibility import min_disparity_policy
from fairalloc.lp import kernel
from fairalloc.policy import Scope
from fairalloc.population import Shape, generate_random

CASES = [
    ("small L0xL1", Shape(2, 2, 2, 1), Scope.L0xL1),
    ("LxXnoG 3x2x3", Shape(3, 3, 2, 3), Scope.LxXnoG),
    ("LxG 4 groups", Shape(4, 3, 2, 2), Scope.LxG),
    ("FULL 4x3x2x3", Shape(4, 3, 2, 3), Scope.FULL),
]


def time_case(shape, scope, repeat):
    models = [generate_random(s, shape) for s in range(repeat)]
    t0 = time.perf_counter()
    gaps = [min_disparity_policy(m, scope, 0.5).gap for m in models]
    return (time.perf_counter() - t0) / repeat, gaps


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not kernel.compiled_available():
        raise SystemExit("compiled kernel not built; run `pip install --no-build-isolation -e .` first")
    print(f"{'case':<16}{'python ms':>12}{'compiled ms':>14}{'speedup':>10}")
    for name, shape, scope in CASES:
        kernel.use("python")
        tp, gp = time_case(shape, scope, args.repeat)
        kernel.use("compiled")
        tc, gc = time_case(shape, scope, args.repeat)
        assert gp == gc, "backends disagree"
        print(f"{name:<16}{tp * 1e3:>12.1f}{tc * 1e3:>14.1f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
