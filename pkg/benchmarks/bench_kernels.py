#!/usr/bin/env python3
"""Compare the compiled integrator core against the pure-numpy fallback.

Runs the reference experiment's march (eps = 0.02, a = 0.5) over a step
count sized per implementation, reports steps/s, the speedup, and checks
that both paths agree on the final state.

    python benchmarks/bench_kernels.py [--steps N]
"""

import argparse
import time

import numpy as np

from oscisep import _kernels
from oscisep._kernels import fallback
from oscisep.experiment import ExperimentConfig


def march(module, nsteps):
    cfg = ExperimentConfig(epsilon=0.02, a=0.5)
    sys = cfg.build_system()
    p0, q0 = cfg.initial_state()
    w, quad = sys.potential.kernel_params(sys.dims)
    h = cfg.dt_factor * cfg.epsilon
    ss = np.array([0, nsteps], dtype=np.int64)
    out_q = np.empty((2, sys.total_dim))
    out_p = np.empty((2, sys.total_dim))
    t0 = time.perf_counter()
    res = _kernels.run_trig(q0.flat(), p0.flat(), h, nsteps, sys.omega_flat,
                            w, quad, sys.dims[0], sys.monitor_radius, ss,
                            out_q, out_p, module=module)
    dt = time.perf_counter() - t0
    return dt, res, out_q[-1], out_p[-1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=5_000_000,
                    help="steps for the compiled run (fallback uses steps/50)")
    args = ap.parse_args()

    if not _kernels.HAVE_COMPILED:
        print("compiled extension not available; benchmarking fallback only")
        dt, *_ = march(fallback, args.steps // 50)
        print(f"fallback: {args.steps // 50 / dt / 1e6:.3f} Msteps/s")
        return

    from oscisep._kernels import _core

    n_fast = args.steps
    n_slow = max(10_000, args.steps // 50)
    dt_c, res_c, q_c, p_c = march(_core, n_fast)
    dt_f, res_f, q_f, p_f = march(fallback, n_slow)
    rate_c = n_fast / dt_c
    rate_f = n_slow / dt_f
    print(f"compiled: {n_fast} steps in {dt_c:.2f}s -> {rate_c / 1e6:.1f} Msteps/s")
    print(f"fallback: {n_slow} steps in {dt_f:.2f}s -> {rate_f / 1e6:.3f} Msteps/s")
    print(f"speedup: {rate_c / rate_f:.0f}x")
    print(f"2e9-step production run estimate: compiled {2e9 / rate_c / 60:.1f} min, "
          f"fallback {2e9 / rate_f / 3600:.1f} h")

    # agreement check over a common short march
    n_chk = 100_000
    _, _, q1, p1 = march(_core, n_chk)
    _, _, q2, p2 = march(fallback, n_chk)
    err = max(np.max(np.abs(q1 - q2)), np.max(np.abs(p1 - p2)))
    print(f"agreement over {n_chk} steps: max |diff| = {err:.2e}")
    if not err <= 1e-11:
        raise SystemExit("kernel paths disagree")


if __name__ == "__main__":
    main()
