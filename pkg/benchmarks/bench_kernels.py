"""Time the compiled and numpy solver backends on the same MPC problems.

Usage: python benchmarks/bench_kernels.py [--problems N] [--iters K]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from hympc.dynamics import DroneState, GateObservation
from hympc.mpc import kernels
from hympc.mpc.solver import MpcConfig, MpcRequest, hover_controls, pack_problem


def problems(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    cfg = MpcConfig()
    for _ in range(n):
        x0 = DroneState(p=rng.uniform([-6, -1, 1], [0, 1, 2]), v=rng.normal(0, 1, 3))
        g = GateObservation(rng.uniform([2, -1.5, 1], [2, 1.5, 1.8]), rng.normal(0, 1, 3))
        req = MpcRequest(x0, g, g, float(rng.uniform(0.1, 1.0)),
                         DroneState(p=np.array([4.0, 0.0, 1.5])), float(rng.uniform()))
        yield cfg, req


def bench(backend, cases, iters: int) -> tuple[float, list[np.ndarray]]:
    out = []
    t0 = time.perf_counter()
    for cfg, req in cases:
        refs, qdiag, w, u_ref, qu = pack_problem(req, cfg)
        U, *_ = backend.solve(req.x0.to_vector(), hover_controls(cfg), cfg.dt, cfg.limits.g,
                              cfg.limits.lower, cfg.limits.upper, refs, qdiag, w, u_ref, qu,
                              max_iter=iters, tol=0.0)
        out.append(U)
    return time.perf_counter() - t0, out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--problems", type=int, default=20)
    ap.add_argument("--iters", type=int, default=10)
    args = ap.parse_args()
    cases = list(problems(args.problems))
    py = kernels.python_backend
    cy = kernels.compiled_backend
    t_py, u_py = bench(py, cases, args.iters)
    print(f"numpy   : {1e3 * t_py / len(cases):8.2f} ms/solve")
    if cy is None:
        print("compiled: extension not built")
        return
    t_cy, u_cy = bench(cy, cases, args.iters)
    diff = max(float(np.max(np.abs(a - b))) for a, b in zip(u_py, u_cy))
    print(f"compiled: {1e3 * t_cy / len(cases):8.2f} ms/solve")
    print(f"speedup : {t_py / t_cy:8.1f}x   max |U_numpy - U_compiled| = {diff:.2e}")


if __name__ == "__main__":
    main()
