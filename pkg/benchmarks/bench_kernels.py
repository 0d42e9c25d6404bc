"""Compare the numba and numpy kernels on a likelihood grid workload.

Run with ``python benchmarks/bench_kernels.py [--repeats N]``. Prints the best
wall time per backend and the maximum absolute difference of their outputs.
"""

import argparse
import time

import numpy as np

from inversefilter import kernels
from inversefilter.estimation import ScalarSetup, default_c_grid, simulate_scalar_batch
from inversefilter.experiments import HMM_MODEL, hmm_from_block
from inversefilter.model import simulate_chain
from inversefilter.probe import symmetric_sensor


def best_time(fn, repeats):
    out = fn()  # first call also triggers compilation
    ts = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t)
    return min(ts), out


def workloads():
    setup = ScalarSetup(horizon=1000)
    x, y, a = simulate_scalar_batch(setup, 1.5, np.arange(20))
    cs = default_c_grid(200)
    m = hmm_from_block(HMM_MODEL)
    rec = simulate_chain(m, 200, 0)
    rng = np.random.default_rng(0)
    U, Ur = rng.random((200, 256)), rng.random(200)
    Bs = np.array([symmetric_sensor(t) for t in np.linspace(0.55, 0.99, 24)])
    ch = m.channel
    pargs = (m.P, Bs, rec.x, rec.a, ch.g, ch.thresholds, ch.confusion, m.pi0, U, Ur)
    return {
        "classic Kalman grid (20 x 1000 x 200)":
            lambda b: kernels.classic_loglik_grid(y, cs, setup.A, setup.Q, setup.R, setup.S0, backend=b),
        "inverse Kalman grid (20 x 1000 x 200)":
            lambda b: kernels.inverse_loglik_grid(x, a, cs, setup.A, setup.Q, setup.R, setup.sigma_eps2, setup.S0,
                                                  backend=b),
        "particle HMM grid (200 steps x 256 particles x 24)":
            lambda b: kernels.particle_loglik_grid(*pargs, backend=b),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    print(f"{'workload':52s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, fn in workloads().items():
        tn, on = best_time(lambda: fn("numba"), args.repeats)
        tp, op = best_time(lambda: fn("numpy"), args.repeats)
        print(f"{name:52s} {tn * 1e3:8.2f}ms {tp * 1e3:8.2f}ms {tp / tn:7.1f}x {np.max(np.abs(on - op)):10.1e}")


if __name__ == "__main__":
    main()
