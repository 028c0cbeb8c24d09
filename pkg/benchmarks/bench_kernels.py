"""Time one deflection MM pass with the compiled and the pure-Python kernel.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--K 4]
"""
import argparse
import time

import numpy as np

from ramec import _mmpass_py
from ramec.beamforming import mmse_beamformers, rates_from_sinr
from ramec.channel import boresight_deflections
from ramec.compute_alloc import kkt_edge_allocation
from ramec.deflection import optimize_deflections
from ramec.driver import draw_trial
from ramec.scenario import Scenario

try:
    from ramec import _mmpass
except ImportError:
    _mmpass = None


def _setup(scenario, seed):
    real, _ = draw_trial(scenario, seed)
    F = boresight_deflections(real.N)
    W, g = mmse_beamformers(real.channels(F), scenario.powers_w, scenario.noise_w)
    alloc, _ = kkt_edge_allocation(rates_from_sinr(g, scenario.bandwidth_hz), scenario)
    return real, F, W, alloc


def time_kernel(kernel, cases, scenario, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for real, F, W, alloc in cases:
            optimize_deflections(F, real, W, alloc, scenario, max_outer=1, kernel=kernel)
        best = min(best, time.perf_counter() - t0)
    return best / len(cases)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--K", type=int, default=4)
    ap.add_argument("--cases", type=int, default=5)
    args = ap.parse_args()

    scenario = Scenario(K=args.K)
    cases = [_setup(scenario, s) for s in range(args.cases)]
    t_py = time_kernel(_mmpass_py, cases, scenario, args.repeat)
    print(f"python kernel : {t_py * 1e3:9.2f} ms per pass")
    if _mmpass is None:
        print("compiled kernel not built")
        return
    t_c = time_kernel(_mmpass, cases, scenario, args.repeat)
    print(f"cython kernel : {t_c * 1e3:9.2f} ms per pass")
    print(f"speed-up      : {t_py / t_c:9.1f}x")


if __name__ == "__main__":
    main()
