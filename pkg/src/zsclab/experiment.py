"""Desk-scale training/evaluation pipeline: many runs, tie-breaking, XP curves.

Trains ``n_runs * seeds_per_run`` policies, applies tie-breaking selection at
each requested pool size K, then reports cross-play matrices, the
average-off-diagonal curve, and the compatibility-class census.
"""

from __future__ import annotations

import multiprocessing
import os
from dataclasses import dataclass, field

import numpy as np

from .core import DecPomdp, TabularPolicy
from .envs import build_env, reference_policies
from .lfc import PolicyClass, XpMatrix, avg_offdiag, cluster_policies, xp_matrix
from .otherplay import op_value
from .report import (
    RunManifest,
    write_curve_csv,
    write_curve_svg,
    write_heatmap_svg,
    write_histogram_svg,
    write_matrix_csv,
)
from .tiebreak import TieBreakConfig, encoded_width, init_hash_network, tie_break_value
from .training import TrainConfig, train_op

DEFAULT_TRAIN = {
    # budgets sized so env steps per policy stay at or under 1e6; the entropy
    # coefficient follows the highest-that-still-converges rule for tabular
    # tables (0.5 caps the two-stage OP value at ~0.459, 0.3 reaches ~0.493)
    "two_stage_lever": {"n_steps": 31_250, "batch_episodes": 16, "entropy_coeff": 0.3},
    "asymmetric_lever": {"n_steps": 20_833, "batch_episodes": 16, "entropy_coeff": 0.3},
    "lever_coordination": {"n_steps": 10_000, "batch_episodes": 16, "entropy_coeff": 0.3},
    "matching_pennies": {"n_steps": 10_000, "batch_episodes": 16, "entropy_coeff": 0.3},
}

OPTIMUM_REFERENCE = {
    "two_stage_lever": "repeat",
    "asymmetric_lever": "follower_repeat",
    "matching_pennies": "mixed_optimum",
}


def train_seed(master_seed: int, run: int, slot: int) -> int:
    return int(np.random.SeedSequence(entropy=(master_seed, run, slot)).generate_state(1)[0])


def _train_one(args):
    env_name, cfg_kwargs, seed = args
    d = build_env(env_name)
    cfg = TrainConfig(seed=seed, **cfg_kwargs)
    result = train_op(d, cfg)
    return result.policy.tables


@dataclass
class ExperimentResult:
    env_name: str
    policies: list[list[TabularPolicy]]  # [run][slot]
    chi_values: np.ndarray  # flat, one per policy
    chosen: dict[int, list[int]]  # K -> chosen slot per run
    matrices: dict[int, XpMatrix]
    avg_offdiag: dict[int, float]
    classes: list[PolicyClass]
    optimum: float | None
    env_steps_per_policy: int

    def class_proportions(self) -> list[float]:
        total = sum(len(c.members) for c in self.classes)
        return [len(c.members) / total for c in self.classes]


def run_experiment(
    env_name: str,
    n_runs: int = 10,
    seeds_per_run: int = 8,
    k_list: tuple[int, ...] = (1, 2, 4, 8),
    n_steps: int | None = None,
    batch_episodes: int | None = None,
    hash_seed: int = 0,
    master_seed: int = 0,
    processes: int = 0,
    exact_eval: bool = True,
    episodes: int = 2048,
    cluster_episodes: int | None = None,
    threshold: float = 0.6,
) -> ExperimentResult:
    d = build_env(env_name)
    defaults = DEFAULT_TRAIN.get(env_name, {"n_steps": 10_000, "batch_episodes": 32})
    cfg_kwargs = dict(defaults)
    if n_steps is not None:
        cfg_kwargs["n_steps"] = n_steps
    if batch_episodes is not None:
        cfg_kwargs["batch_episodes"] = batch_episodes
    cfg_kwargs["eval_every"] = max(1, cfg_kwargs["n_steps"] // 20)
    steps_per_policy = cfg_kwargs["n_steps"] * cfg_kwargs["batch_episodes"] * (d.horizon + 1)

    jobs = [
        (env_name, cfg_kwargs, train_seed(master_seed, run, slot))
        for run in range(n_runs)
        for slot in range(seeds_per_run)
    ]
    if processes and processes > 1:
        with multiprocessing.get_context("fork").Pool(processes) as pool:
            tables = pool.map(_train_one, jobs)
    else:
        tables = [_train_one(job) for job in jobs]
    flat_policies = [TabularPolicy.from_tables(d, t) for t in tables]
    policies = [
        flat_policies[run * seeds_per_run : (run + 1) * seeds_per_run]
        for run in range(n_runs)
    ]

    cfg = TieBreakConfig(exact_mode=exact_eval, n_samples=episodes, hash_seed=hash_seed)
    net = init_hash_network(hash_seed, encoded_width(d, cfg))
    chi = np.array(
        [
            tie_break_value(d, pol, net, cfg, seed=train_seed(master_seed, 10_000, idx))
            for idx, pol in enumerate(flat_policies)
        ]
    )

    chosen: dict[int, list[int]] = {}
    matrices: dict[int, XpMatrix] = {}
    offdiags: dict[int, float] = {}
    n_eps = None if exact_eval else episodes
    for K in k_list:
        if K > seeds_per_run:
            raise ValueError(f"K={K} exceeds seeds_per_run={seeds_per_run}")
        picks = []
        for run in range(n_runs):
            vals = chi[run * seeds_per_run : run * seeds_per_run + K]
            picks.append(int(np.argmax(vals)))
        chosen[K] = picks
        selected = [policies[run][picks[run]] for run in range(n_runs)]
        m = xp_matrix(d, selected, n_episodes=n_eps, seed=master_seed + K)
        matrices[K] = m
        offdiags[K] = avg_offdiag(m)

    classes = cluster_policies(
        d,
        flat_policies,
        threshold=threshold,
        n_episodes=None if exact_eval else (cluster_episodes or 256),
        seed=master_seed,
    )
    opt_ref = OPTIMUM_REFERENCE.get(env_name)
    optimum = None
    if opt_ref is not None:
        optimum = op_value(d, reference_policies(env_name)[opt_ref])
    return ExperimentResult(
        env_name,
        policies,
        chi,
        chosen,
        matrices,
        offdiags,
        classes,
        optimum,
        steps_per_policy,
    )


def emit_experiment_artifacts(result: ExperimentResult, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    run_ids = [f"r{idx}" for idx in range(len(result.policies))]
    ks = sorted(result.matrices)
    for K in ks:
        base = os.path.join(out_dir, f"xp_matrix_k{K}")
        write_matrix_csv(base + ".csv", result.matrices[K].values, run_ids)
        write_heatmap_svg(
            base + ".svg",
            result.matrices[K].values,
            run_ids,
            title=f"{result.env_name}: XP values, K={K}",
        )
        written += [base + ".csv", base + ".svg"]
    curve_rows = [
        {"K": K, "avg_offdiag_xp": result.avg_offdiag[K]} for K in ks
    ]
    curve_csv = os.path.join(out_dir, "avg_offdiag.csv")
    write_curve_csv(curve_csv, curve_rows, ["K", "avg_offdiag_xp"])
    curve_svg = os.path.join(out_dir, "avg_offdiag.svg")
    write_curve_svg(
        curve_svg,
        ks,
        {"avg off-diagonal XP": [result.avg_offdiag[K] for K in ks]},
        title=f"{result.env_name}: XP vs tie-breaking pool size",
        x_label="K",
        optimum=result.optimum,
    )
    written += [curve_csv, curve_svg]

    member_class = {}
    for ci, cls in enumerate(result.classes):
        for m in cls.members:
            member_class[m] = ci
    hist_rows = [
        {"policy": idx, "class": member_class[idx], "tie_break_value": float(v)}
        for idx, v in enumerate(result.chi_values)
    ]
    hist_csv = os.path.join(out_dir, "class_tiebreak_values.csv")
    write_curve_csv(hist_csv, hist_rows, ["policy", "class", "tie_break_value"])
    groups = {
        f"class {ci} ({len(cls.members)})": [
            float(result.chi_values[m]) for m in cls.members
        ]
        for ci, cls in enumerate(result.classes)
    }
    hist_svg = os.path.join(out_dir, "class_tiebreak_values.svg")
    write_histogram_svg(hist_svg, groups, title=f"{result.env_name}: tie-break values by class")
    written += [hist_csv, hist_svg]
    return written
