"""Timing comparison of the two convolution kernel backends.

Runs forward and backward passes for both the compiled Cython core and the
numpy im2col fallback at the shapes the network actually uses, and prints a
table. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import importlib
import os
import sys
import time

import numpy as np

# network-shaped workloads: (label, kind, x shape, w shape, padding)
CASES = [
    ("audio block1 in", "conv2d", (240, 7, 64), (64, 7, 3, 3), (2, 1)),
    ("audio block1 mid", "conv2d", (240, 64, 64), (64, 64, 3, 3), (2, 1)),
    ("audio block2", "conv2d", (60, 64, 16), (64, 64, 3, 3), (2, 1)),
    ("audio block3", "conv2d", (60, 64, 4), (64, 64, 3, 3), (2, 1)),
    ("sensor block1", "conv1d", (60, 6), (64, 6, 5), (4,)),
    ("sensor block2", "conv1d", (60, 64), (32, 64, 5), (4,)),
]


def _load_backend(name):
    os.environ["SELD6DOF_KERNELS"] = name
    for mod in [m for m in sys.modules if m.startswith("seld6dof.kernels")]:
        del sys.modules[mod]
    try:
        return importlib.import_module("seld6dof.kernels")
    except ImportError:
        return None


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(kern, label, kind, xs, ws, pad, repeats):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(xs)
    w = rng.standard_normal(ws) * 0.1
    b = np.zeros(ws[0])
    if kind == "conv2d":
        fwd = lambda: kern.conv2d_forward(x, w, b, *pad)
        y = fwd()
        bwd = lambda: kern.conv2d_backward(x, w, y, *pad)
    else:
        fwd = lambda: kern.conv1d_forward(x, w, b, *pad)
        y = fwd()
        bwd = lambda: kern.conv1d_backward(x, w, y, *pad)
    return _time(fwd, repeats), _time(bwd, repeats)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    results = {}
    for name in ("cython", "numpy"):
        kern = _load_backend(name)
        if kern is None:
            print("backend %s unavailable (extension not built)" % name)
            continue
        assert kern.backend_name() == name
        results[name] = [bench_case(kern, *case, repeats=args.repeats)
                         for case in CASES]

    if set(results) != {"cython", "numpy"}:
        return

    print("best-of-%d times, milliseconds (ratio > 1 means numpy is faster)"
          % args.repeats)
    header = "%-18s %-7s  %10s %10s %7s   %10s %10s %7s" % (
        "case", "kind", "cy fwd", "np fwd", "ratio", "cy bwd", "np bwd",
        "ratio")
    print(header)
    print("-" * len(header))
    for case, cy, np_ in zip(CASES, results["cython"], results["numpy"]):
        label, kind = case[0], case[1]
        print("%-18s %-7s  %10.3f %10.3f %7.2f   %10.3f %10.3f %7.2f" % (
            label, kind, cy[0] * 1e3, np_[0] * 1e3, np_[0] / cy[0],
            cy[1] * 1e3, np_[1] * 1e3, np_[1] / cy[1]))


if __name__ == "__main__":
    main()
