"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--n 4000] [--repeat 7]

Each kernel is run on identical inputs by both backends; the script checks
that the outputs agree and prints the best-of-``repeat`` wall time per call.
End-to-end timings for a loop analysis and one pipeline run follow, with the
backend switched through ``epbtopo.kernels``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from epbtopo import _pykernels as py
from epbtopo.model import SystemConstants, reduced_couplings, spectral_many

try:
    from epbtopo import _ckernels as ck
except ImportError:
    ck = None


def _inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    h, g = reduced_couplings("parabola", rng.uniform(-1.5, 1.5, size=(n, 3)))
    # a smooth closed loop for the sequence kernels
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    X = np.stack([-0.24 + 0.3 * np.cos(t), 0.3 * np.sin(t), 0.1 * np.ones(n)], axis=1)
    _, R, L, _ = spectral_many("parabola", SystemConstants(), X)
    R = np.ascontiguousarray(R)
    L = np.ascontiguousarray(L)
    seqL = np.ascontiguousarray(L[:, 0])
    seqR = np.ascontiguousarray(R[:, 0])
    nxt = np.ascontiguousarray(np.concatenate([seqR[1:], seqR[:1]]))
    c = SystemConstants()
    freqs = np.linspace(c.omega0 - 300.0, c.omega0 + 300.0, 61)
    return {
        "eig2": (h, g),
        "associate": (L, R, 0.5, np.inf),
        "gauge_fix": (seqL, seqR, 1e-12),
        "wilson_running": (seqL, nxt, 1e-12),
        "spectrum_amplitude": (c.omega0, c.gamma0, c.kappa0, -0.3, 0.2, 0.25, freqs),
    }


def _max_diff(a, b):
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        a, b = np.asarray(a), np.asarray(b)
        if a.size == 0:
            return 0.0
        return float(np.max(np.abs(a.astype(complex) - b.astype(complex))))
    return float(abs(a - b))


def _best(fn, args, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(lambda: fn(*args), number=1), 1e-7)))
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def bench_kernels(n, repeat):
    rows = []
    for name, args in _inputs(n).items():
        tp = _best(getattr(py, name), args, repeat)
        if ck is None:
            rows.append((name, tp, float("nan"), float("nan")))
            continue
        diff = _max_diff(getattr(py, name)(*args), getattr(ck, name)(*args))
        tc = _best(getattr(ck, name), args, repeat)
        rows.append((name, tp, tc, diff))
    return rows


_END_TO_END = """
import time
from epbtopo.invariants import analyze_loop
from epbtopo.model import SystemConstants
from epbtopo.paths import builtin_loop, sample_loop
from epbtopo.retrieval import pipeline_reproduce
from epbtopo import kernels
c = SystemConstants()
lp = sample_loop(builtin_loop("loop-a"), 200)
analyze_loop(lp, c)
t = time.perf_counter()
for _ in range(5):
    analyze_loop(lp, c)
a = (time.perf_counter() - t) / 5
pipeline_reproduce("loop-a", eta=0.03, seed=0)
t = time.perf_counter()
for s in range(5):
    pipeline_reproduce("loop-a", eta=0.03, seed=s)
p = (time.perf_counter() - t) / 5
print(kernels.BACKEND, a, p)
"""


def bench_end_to_end():
    out = {}
    for force in ("0", "1"):
        env = dict(os.environ, EPBTOPO_PURE_PYTHON=force)
        r = subprocess.run([sys.executable, "-c", _END_TO_END], env=env, capture_output=True, text=True, check=True)
        backend, a, p = r.stdout.split()
        out[backend] = (float(a), float(p))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4000, help="points per kernel call")
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)

    if ck is None:
        print("compiled extension not built; timing the numpy fallback only")
    print(f"kernel timings, n = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<20}{'python [ms]':>12}{'cython [ms]':>13}{'speedup':>9}{'max |diff|':>12}")
    for name, tp, tc, diff in bench_kernels(args.n, args.repeat):
        print(f"{name:<20}{tp * 1e3:12.3f}{tc * 1e3:13.3f}{tp / tc:9.1f}{diff:12.1e}")

    if not args.skip_end_to_end and ck is not None:
        print("\nend to end (mean of 5)")
        res = bench_end_to_end()
        print(f"{'task':<34}{'python [ms]':>12}{'cython [ms]':>13}{'speedup':>9}")
        for k, label in enumerate(("analyze_loop, loop-a, 1600 points", "pipeline_reproduce, loop-a")):
            tp, tc = res["python"][k], res["cython"][k]
            print(f"{label:<34}{tp * 1e3:12.1f}{tc * 1e3:13.1f}{tp / tc:9.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
