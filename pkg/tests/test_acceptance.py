"""Acceptance suite: one test per exit criterion, each printing a pass/fail
line with the computed value, target, and tolerance.

The analytic criteria delegate to zsclab.verify (the same code behind the
CLI ``verify`` command). The desk-scale pipeline criteria train
10 runs x 8 seeds per game through zsclab.experiment and check the
cross-play bands; they are stochastic by nature but fully seeded.
"""

import math
import os
import time

import numpy as np
import pytest

from zsclab import verify
from zsclab.experiment import run_experiment

PIPELINE_SEED = 0


def report(name, passed, detail):
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    assert passed, f"{name}: {detail}"


def run_check(fn):
    res = fn()
    report(
        res.name,
        res.passed,
        f"{res.computed} (target: {res.target}; tol: {res.tolerance}; {res.elapsed_s:.1f}s)",
    )


def test_criterion_01_automorphism_groups():
    run_check(verify.check_automorphism_groups)


def test_criterion_02_exact_op_optima():
    run_check(verify.check_op_optima)


def test_criterion_03_incompatibility():
    run_check(verify.check_incompatibility)


def test_criterion_04_matching_pennies_separation():
    run_check(verify.check_matching_pennies)


def test_criterion_05_symmetrizer_theorem():
    run_check(verify.check_symmetrizer)


def test_criterion_06_pushforward_transport():
    run_check(verify.check_pushforward_transport)


def test_criterion_07_gradient_oracle():
    run_check(verify.check_gradient_oracle)


def test_criterion_08_tiebreak_invariance():
    run_check(verify.check_tiebreak_invariance)


@pytest.fixture(scope="module")
def pipelines():
    processes = min(8, os.cpu_count() or 1)
    t0 = time.perf_counter()
    out = {}
    for env in ("two_stage_lever", "asymmetric_lever"):
        out[env] = run_experiment(
            env,
            n_runs=10,
            seeds_per_run=8,
            k_list=(1, 8),
            master_seed=PIPELINE_SEED,
            processes=processes,
            exact_eval=True,
        )
    out["elapsed"] = time.perf_counter() - t0
    return out


def test_criterion_09_desk_scale_pipeline(pipelines):
    two = pipelines["two_stage_lever"]
    asym = pipelines["asymmetric_lever"]
    elapsed = pipelines["elapsed"]
    checks = [
        ("two-stage XP at K=8", two.avg_offdiag[8], ">= 0.45", two.avg_offdiag[8] >= 0.45),
        ("two-stage XP at K=1", two.avg_offdiag[1], "<= 0.15", two.avg_offdiag[1] <= 0.15),
        ("asymmetric XP at K=8", asym.avg_offdiag[8], ">= 1.6", asym.avg_offdiag[8] >= 1.6),
        (
            "env steps per policy",
            max(two.env_steps_per_policy, asym.env_steps_per_policy),
            "<= 1e6",
            max(two.env_steps_per_policy, asym.env_steps_per_policy) <= 10**6,
        ),
        ("pipeline runtime", round(elapsed, 1), "<= 1800 s", elapsed <= 1800.0),
    ]
    detail = "; ".join(f"{n}={v} ({t})" for n, v, t, _ in checks)
    report("criterion_09_desk_scale_pipeline", all(ok for *_, ok in checks), detail)


def test_criterion_10_clustering(pipelines):
    run_check(verify.check_cluster_analytic)
    two = pipelines["two_stage_lever"]
    proportions = two.class_proportions()
    ok = len(proportions) == 2 and all(0.35 <= p <= 0.65 for p in proportions)
    report(
        "criterion_10_pipeline_classes",
        ok,
        f"{len(proportions)} classes with proportions {[round(p, 3) for p in proportions]} "
        "(target: exactly 2, each in [0.35, 0.65])",
    )


def test_criterion_11_lfc_protocol():
    run_check(verify.check_lfc_protocol)
