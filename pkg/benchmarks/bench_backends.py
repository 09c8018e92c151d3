"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter (the backend is chosen at import
time from LTCACHE_BACKEND). Numba timings exclude the first, compiling call.
Results of both backends are compared so a speedup never hides a mismatch.

    python benchmarks/bench_backends.py [--quick]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from ltcache import BACKEND, robust_soliton, CacheSystem, Placement, REFERENCE_CONNECTIVITY
from ltcache.analysis import failure_curve, failure_probability, monte_carlo_overhead
from ltcache.montecarlo import estimate_rate
from ltcache.netmodel import GridGeometry, derive_connectivity

scale = float(sys.argv[1])
k = 100
dist = robust_soliton(k, 0.05, 0.5)
sys_ = CacheSystem.zipf(10, k, 3, 0.8, REFERENCE_CONNECTIVITY)
place = Placement.uniform(sys_)
jobs = {
    "delivery_trials": lambda: estimate_rate(sys_, place, dist, int(2000 * scale), master_seed=1).mean,
    "overhead_trials": lambda: monte_carlo_overhead(k, dist, int(2000 * scale), master_seed=2)[0],
    "forward_dp_m130": lambda: failure_probability(k, dist, 130),
    "backward_dp_k40": lambda: float(failure_curve(40, robust_soliton(40, 0.05, 0.5)).pf.sum()),
    "coverage_counts": lambda: derive_connectivity(GridGeometry(60, 80), int(1_000_000 * scale), 3).gamma.tolist(),
}
out = {"backend": BACKEND, "results": {}}
for name, fn in jobs.items():
    if BACKEND == "numba":
        fn()  # compile
    t0 = time.perf_counter()
    val = fn()
    out["results"][name] = {"seconds": time.perf_counter() - t0, "value": val}
print(json.dumps(out))
"""


def run(backend, scale):
    env = dict(os.environ, LTCACHE_BACKEND=backend, PYTHONWARNINGS="ignore")
    proc = subprocess.run([sys.executable, "-c", WORKER, str(scale)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def same(a, b):
    if isinstance(a, list):
        return len(a) == len(b) and all(same(x, y) for x, y in zip(a, b))
    return abs(a - b) <= 1e-9 * max(1.0, abs(a))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    args = ap.parse_args()
    scale = 0.25 if args.quick else 1.0
    fast = run("numba", scale)["results"]
    slow = run("numpy", scale)["results"]
    print(f"{'kernel':<18}{'numba s':>10}{'numpy s':>10}{'speedup':>9}  match")
    ok = True
    for name in fast:
        f, s = fast[name], slow[name]
        match = same(f["value"], s["value"])
        ok &= match
        print(f"{name:<18}{f['seconds']:>10.4f}{s['seconds']:>10.4f}"
              f"{s['seconds'] / max(f['seconds'], 1e-9):>8.1f}x  {'yes' if match else 'NO'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
