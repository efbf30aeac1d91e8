#!/usr/bin/env python3
"""Benchmark the compiled training kernel against the pure-Python twin.

Usage: python benchmarks/bench_kernels.py [--updates N] [--batch K]

Reports episodes/second for each backend on every catalog environment that
supports training, checks the outputs are bit-identical, and prints the
speedup.
"""

import argparse
import time

import numpy as np

from zsclab import _kernels_py
from zsclab.envs import build_env
from zsclab.training import PolicyParams, _Plan, resolve_share_weights, TrainConfig

try:
    from zsclab import _kernels as _compiled
except ImportError:
    _compiled = None


def run(backend, d, plan, params, batches, alpha=0.5):
    grad = np.zeros_like(params.logits)
    stats = np.zeros(3)
    scale = 1.0 / (batches[0][0].shape[0] * (d.horizon + 1) * d.n_agents)
    t0 = time.perf_counter()
    for profiles, uniforms in batches:
        grad[:] = 0.0
        backend.accumulate_batch(
            params.logits, grad, plan.agent_offset, plan.level_offset,
            plan.n_act, plan.n_obs, plan.act_stride, plan.obs_div,
            plan.initial_cdf, plan.trans_cdf, plan.obs_cdf, plan.reward,
            plan.src_agent, plan.act_fwd, plan.obs_inv,
            profiles, uniforms, d.horizon, alpha, scale, stats,
        )
    elapsed = time.perf_counter() - t0
    return elapsed, grad.copy(), stats.copy()


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--updates", type=int, default=200)
    parser.add_argument("--batch", type=int, default=32)
    args = parser.parse_args()

    if _compiled is None:
        print("compiled kernel unavailable; only the Python backend will run")

    for name in ("two_stage_lever", "asymmetric_lever", "matching_pennies"):
        d = build_env(name)
        shared = resolve_share_weights(d, TrainConfig(n_steps=1))
        plan = _Plan(d, shared)
        params = PolicyParams.zeros(d, shared)
        rng = np.random.default_rng(0)
        params.logits[:] = rng.normal(0, 0.5, params.logits.size)
        batches = [
            (
                rng.integers(0, plan.n_auts, size=(args.batch, d.n_agents), dtype=np.int64),
                rng.random((args.batch, plan.n_draws)),
            )
            for _ in range(args.updates)
        ]
        episodes = args.updates * args.batch
        t_py, g_py, s_py = run(_kernels_py, d, plan, params, batches)
        line = f"{name:22s} python: {episodes / t_py:10.0f} ep/s"
        if _compiled is not None:
            t_cy, g_cy, s_cy = run(_compiled, d, plan, params, batches)
            identical = np.array_equal(g_py, g_cy) and np.array_equal(s_py, s_cy)
            line += (
                f"   cython: {episodes / t_cy:10.0f} ep/s"
                f"   speedup: {t_py / t_cy:6.1f}x   bit-identical: {identical}"
            )
        print(line)


if __name__ == "__main__":
    main()
