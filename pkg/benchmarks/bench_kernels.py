"""Benchmark the hot simulation kernels: numba JIT vs pure-numpy fallback.

Usage:
    python benchmarks/bench_kernels.py            # runs both backends
    python benchmarks/bench_kernels.py --backend numba
    python benchmarks/bench_kernels.py --backend numpy

The two-backend mode spawns a subprocess per backend (the kernel path is
chosen at import time from OVQ_NO_NUMBA) and prints a side-by-side table.
Workloads are sized so the fallback finishes in seconds; both paths produce
bit-identical results, which is asserted on a small warm-up workload.
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _workloads():
    import numpy as np

    from ovqueue.models import (ClockLaw, GeneralResampledSpec, RateLawFinite,
                                RateLawGeneral, ScalarLaw, ServiceLaw,
                                EndogenousSpec, build_resampling_generator)
    from ovqueue.sim import (SimConfig, simulate_endogenous,
                             simulate_general_resampled, simulate_modulated,
                             simulate_rbm)

    law = RateLawFinite([1.8, 0.0], [1.0, 1.0], [0.5, 0.5])
    mm = build_resampling_generator(law, 1.0)
    general = GeneralResampledSpec(RateLawGeneral.from_finite(law),
                                   ClockLaw("exponential", {"rate": 1.0}))
    endo = EndogenousSpec(
        ScalarLaw("discrete", {"values": [0.0, 1.6], "probs": [0.5, 0.5]}),
        ServiceLaw("exponential", {"rate": 1.0}))

    return {
        "modulated_ctmc (2e6 events)": lambda: simulate_modulated(
            mm, SimConfig(horizon_events=2 * 10**6, seed=1)),
        "general_resampled (2e5 time units)": lambda: simulate_general_resampled(
            general, SimConfig(horizon_time=2.0 * 10**5, seed=2)),
        "endogenous_chain (2e6 steps)": lambda: simulate_endogenous(
            endo, SimConfig(horizon_events=2 * 10**6, seed=3)),
        "rbm_exact (1e5 paths x 16 steps)": lambda: simulate_rbm(
            -1.0, 2.0, 0.0, list(np.linspace(0.1, 1.6, 16)),
            SimConfig(horizon_time=1.0, seed=4, replications=10**5)),
    }


def run_backend():
    from ovqueue.sim import USING_NUMBA, SimConfig, simulate_modulated
    from ovqueue.models import RateLawFinite, build_resampling_generator

    label = "numba" if USING_NUMBA else "numpy"
    # warm up the JIT so compile time is not measured
    mm = build_resampling_generator(RateLawFinite([0.5], [1.0], [1.0]), 1.0)
    check = simulate_modulated(mm, SimConfig(horizon_events=10_000, seed=9))
    results = {"backend": label, "checksum": float(check.mean), "timings": {}}
    for name, job in _workloads().items():
        start = time.perf_counter()
        job()
        results["timings"][name] = time.perf_counter() - start
    print(json.dumps(results))
    return 0


def run_both():
    rows = {}
    checksums = {}
    for backend, env_val in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, OVQ_NO_NUMBA=env_val)
        out = subprocess.run(
            [sys.executable, __file__, "--backend", "self"],
            env=env, capture_output=True, text=True, check=True)
        doc = json.loads(out.stdout.strip().splitlines()[-1])
        rows[doc["backend"]] = doc["timings"]
        checksums[doc["backend"]] = doc["checksum"]
    if checksums["numba"] != checksums["numpy"]:
        print("WARNING: backends disagree on the check workload!")
    width = max(len(k) for k in rows["numba"])
    print(f"{'kernel workload':<{width}}  {'numba':>9}  {'numpy':>9}  {'speedup':>8}")
    for name in rows["numba"]:
        a, b = rows["numba"][name], rows["numpy"][name]
        print(f"{name:<{width}}  {a:>8.2f}s  {b:>8.2f}s  {b / a:>7.1f}x")
    return 0


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--backend", choices=("numba", "numpy", "self", "both"),
                        default="both")
    args = parser.parse_args()
    if args.backend == "both":
        return run_both()
    if args.backend in ("numba", "numpy"):
        os.environ["OVQ_NO_NUMBA"] = "1" if args.backend == "numpy" else "0"
        return subprocess.run([sys.executable, __file__, "--backend", "self"],
                              env=dict(os.environ)).returncode
    return run_backend()


if __name__ == "__main__":
    sys.exit(main())
