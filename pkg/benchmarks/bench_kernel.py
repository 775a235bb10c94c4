"""Compare the compiled and pure-Python event kernels.

    python benchmarks/bench_kernel.py [--sites 512] [--t-max 200] [--repeat 3]

Both backends run the same inputs; the script checks that the paths agree
bit for bit and reports nanoseconds per clock event.
"""

import argparse
import json
import time

from zrp import kernel
from zrp.configuration import Configuration
from zrp.dynamics import BoundarySpec, RateFunctionSpec, simulate
from zrp.environment import EnvSpec, sample_iid_env

SCENARIOS = {
    "drain-indicator": (BoundarySpec(), RateFunctionSpec(), 3),
    "inject-indicator": (BoundarySpec.segment(0.5), RateFunctionSpec(), 1),
    "ring-bounded-g": (BoundarySpec.ring(), RateFunctionSpec("bounded-monotone", (0, 1, 1.5, 2), 2.0), 2),
}


def time_backend(backend, env, init, boundary, g, t_max, repeat):
    best, result = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = simulate(env, init, boundary, g, t_max, seed=1, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sites", type=int, default=512)
    ap.add_argument("--t-max", type=float, default=200.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    try:
        kernel.implementation("cython")
        backends = ["cython", "python"]
    except ImportError:
        print("compiled kernel not built; timing the Python fallback only")
        backends = ["python"]

    env = sample_iid_env(EnvSpec.uniform(0.6, 1.0), (0, args.sites - 1), 0)
    rows = []
    for name, (boundary, g, fill) in SCENARIOS.items():
        init = Configuration.constant(0, args.sites, fill)
        timings = {}
        results = {}
        for b in backends:
            timings[b], results[b] = time_backend(b, env, init, boundary, g, args.t_max, args.repeat)
        events = results[backends[0]].n_events
        row = {"scenario": name, "events": events}
        for b in backends:
            row[f"{b}_s"] = round(timings[b], 4)
            row[f"{b}_ns_per_event"] = round(1e9 * timings[b] / events, 1)
        if len(backends) == 2:
            row["speedup"] = round(timings["python"] / timings["cython"], 1)
            row["identical"] = results["python"].same_path(results["cython"])
        rows.append(row)
        print(json.dumps(row))


if __name__ == "__main__":
    main()
