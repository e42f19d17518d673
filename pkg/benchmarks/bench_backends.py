"""Compare the compiled and pure-Python event engines on identical workloads.

    python3 benchmarks/bench_backends.py [--repeat 3]

Both engines consume the same counter-based randomness, so each workload is
also checked to end in the same configuration.
"""

import argparse
import time

import numpy as np

from rumorwalk import _backend
from rumorwalk.rng import RngStream
from rumorwalk.sim import SimConfig, init_simulation, run_until
from rumorwalk.walk import Box, WalkParams, evolve_free_system, sample_initial_field


def infection(backend, d, t_max):
    cfg = SimConfig(WalkParams(d, 1.0, 1.0, 1.0), ((0,) * d,), t_max)
    state = init_simulation(cfg, RngStream(1), backend=backend)
    run_until(state, t_max)
    return state.engine.n_events, state.engine.positions()


def free_field(backend, half_width, t):
    p = WalkParams(1, 1.0, 1.0, 1.0)
    f = sample_initial_field(Box.cube(half_width, 1), p, RngStream(2))
    evolve_free_system(f, t, RngStream(2), backend)
    return f.engine(RngStream(2).key).n_events, f.positions


WORKLOADS = {
    "infection d=1 t=100": lambda b: infection(b, 1, 100.0),
    "infection d=2 t=8": lambda b: infection(b, 2, 8.0),
    "free field 2001 sites t=20": lambda b: free_field(b, 1000, 20.0),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _backend.CEngine is None:
        raise SystemExit("compiled engine not built; run pip install -e . --no-build-isolation")
    print(f"{'workload':32s} {'events':>9s} {'compiled s':>11s} {'python s':>9s} {'speed-up':>9s}")
    for name, fn in WORKLOADS.items():
        best = {}
        result = {}
        for backend in ("compiled", "python"):
            times = []
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                result[backend] = fn(backend)
                times.append(time.perf_counter() - t0)
            best[backend] = min(times)
        assert result["compiled"][0] == result["python"][0]
        assert np.array_equal(result["compiled"][1], result["python"][1])
        n = result["compiled"][0]
        print(f"{name:32s} {n:9d} {best['compiled']:11.3f} {best['python']:9.3f} "
              f"{best['python'] / best['compiled']:8.1f}x")


if __name__ == "__main__":
    main()
