"""Compare the compiled transport kernels against the pure-Python fallback.

The acceleration flag is read once at import, so the two configurations run
in separate subprocesses: this script re-invokes itself with ``--single``
under ``KVMARGIN_NUMBA=1`` and ``KVMARGIN_NUMBA=0`` and prints both timings
side by side.  Costs from the two runs must agree to 1e-12; a mismatch is a
bug, not a rounding artifact, because both paths execute the same statements.

Usage: python3 benchmarks/bench_transport.py [--repeats N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def workloads():
    rng = np.random.default_rng(0)
    out = []
    for n in (64, 256, 512):
        out.append(
            (
                f"assignment n={n}",
                rng.normal(size=(n, 8)),
                None,
                rng.normal(size=(n, 8)),
                None,
            )
        )
    for n, m in ((32, 48), (128, 160)):
        wa = rng.dirichlet(np.ones(n))
        wb = rng.dirichlet(np.ones(m))
        out.append(
            (
                f"simplex {n}x{m}",
                rng.normal(size=(n, 8)),
                wa,
                rng.normal(size=(m, 8)),
                wb,
            )
        )
    out.append(
        (
            "sorted 1-d n=4096",
            rng.normal(size=(4096, 1)),
            None,
            rng.normal(size=(4096, 1)),
            None,
        )
    )
    return out


def run_single(repeats):
    from kvmargin._accel import NUMBA_ENABLED
    from kvmargin.transport import PointCloud, w1_1d, w1_exact

    results = []
    for name, pa, wa, pb, wb in workloads():
        a, b = PointCloud(pa, wa), PointCloud(pb, wb)
        solve = w1_1d if name.startswith("sorted") else (lambda x, y: w1_exact(x, y).cost)
        solve(a, b)  # warm-up: JIT compilation must not count against the kernel
        started = time.perf_counter()
        for _ in range(repeats):
            cost = solve(a, b)
        per_call = (time.perf_counter() - started) / repeats
        results.append({"name": name, "cost": cost, "seconds": per_call})
    json.dump({"numba": NUMBA_ENABLED, "results": results}, sys.stdout)


def run_comparison(repeats):
    runs = {}
    for flag in ("1", "0"):
        env = dict(os.environ, KVMARGIN_NUMBA=flag)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--single", "--repeats", str(repeats)],
            env=env,
            capture_output=True,
            text=True,
            check=True,
        )
        runs[flag] = json.loads(proc.stdout)

    if runs["1"]["numba"] == runs["0"]["numba"]:
        print("warning: both runs used the same mode (is numba installed?)", file=sys.stderr)

    worst = 0.0
    print(f"{'workload':<20} {'numba':>12} {'fallback':>12} {'speedup':>9}")
    for fast, slow in zip(runs["1"]["results"], runs["0"]["results"]):
        worst = max(worst, abs(fast["cost"] - slow["cost"]))
        ratio = slow["seconds"] / fast["seconds"]
        print(
            f"{fast['name']:<20} {fast['seconds'] * 1e3:>10.3f}ms {slow['seconds'] * 1e3:>10.3f}ms"
            f" {ratio:>8.1f}x"
        )
    print(f"\nmax |cost difference| across workloads: {worst:.2e}")
    if worst > 1e-12:
        print("FAIL: compiled and fallback kernels disagree", file=sys.stderr)
        return 1
    return 0


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--single", action="store_true", help=argparse.SUPPRESS)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    if args.single:
        run_single(args.repeats)
        return 0
    return run_comparison(args.repeats)


if __name__ == "__main__":
    sys.exit(main())
