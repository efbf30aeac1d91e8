import math

import numpy as np
import pytest

import zsclab
from zsclab.core import (
    ResourceCapError,
    enumerate_ao_histories,
    episode_draw_count,
    expected_return,
    expected_return_mc,
    history_distribution,
    sample_episode,
    validate_decpomdp,
)
from zsclab.envs import build_env, lever_coordination, reference_policies


def make_mixed(d, a, b):
    """Joint policy taking agent 0's locals from a and agent 1's from b."""
    return zsclab.TabularPolicy.from_tables(d, (a.tables[0], b.tables[1]))


def test_validate_catalog_envs_clean():
    for name in zsclab.env_names():
        assert validate_decpomdp(build_env(name)) == []


def test_validate_flags_bad_rows():
    d = build_env("two_stage_lever")
    t = d.transition.copy()
    t[0, 1, 0] = 0.9
    bad = zsclab.DecPomdp(
        d.n_agents, d.n_states, d.n_actions, d.n_observations,
        t, d.observation, d.reward, d.initial, d.horizon,
    )
    problems = validate_decpomdp(bad)
    assert len(problems) == 1
    assert "transition[s=0, a=1]" in problems[0]

    t = d.transition.copy()
    t[0, 2, 0] = -0.25
    bad = zsclab.DecPomdp(
        d.n_agents, d.n_states, d.n_actions, d.n_observations,
        t, d.observation, d.reward, d.initial, d.horizon,
    )
    assert any("negative entry" in p for p in validate_decpomdp(bad))


def test_enumerate_ao_histories_counts_and_order():
    two = build_env("two_stage_lever")
    assert enumerate_ao_histories(two, 0, 0) == [()]
    level1 = enumerate_ao_histories(two, 0, 1)
    assert level1 == [(0, 0), (0, 1), (1, 0), (1, 1)]
    asym = build_env("asymmetric_lever")
    assert len(enumerate_ao_histories(asym, 0, 1)) == 9
    assert len(enumerate_ao_histories(asym, 0, 2)) == 81
    with pytest.raises(ValueError):
        enumerate_ao_histories(two, 0, 2)


def test_history_distribution_two_stage_uniform_first_round():
    d = build_env("two_stage_lever")
    rep = reference_policies("two_stage_lever")["repeat"]
    dist = history_distribution(d, rep)
    assert abs(sum(dist.values()) - 1.0) < 1e-9
    first_round = {}
    for h, p in dist.items():
        first_round[h.actions[0]] = first_round.get(h.actions[0], 0.0) + p
    assert set(first_round) == {(0, 0), (0, 1), (1, 0), (1, 1)}
    for p in first_round.values():
        assert abs(p - 0.25) < 1e-12


def test_history_distribution_deterministic_chain():
    d = build_env("matching_pennies")
    tabs = (np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]))
    pol = zsclab.TabularPolicy.from_tables(d, tabs)
    dist = history_distribution(d, pol)
    assert len(dist) == 1
    (h, p), = dist.items()
    assert p == 1.0
    assert h.total_reward == -0.5


def test_history_distribution_lever_nine():
    d = build_env("lever_coordination")
    pol = reference_policies("lever_coordination")["unique_lever"]
    dist = history_distribution(d, pol)
    assert len(dist) == 1
    (h, p), = dist.items()
    assert p == 1.0 and h.total_reward == 0.9


def test_history_distribution_cap():
    d = build_env("asymmetric_lever")
    with pytest.raises(ResourceCapError):
        history_distribution(d, zsclab.TabularPolicy.uniform(d), cap=10)


def test_expected_return_reference_values():
    d = build_env("two_stage_lever")
    refs = reference_policies("two_stage_lever")
    assert abs(expected_return(d, refs["repeat"]) - 0.5) < 1e-12
    mixed = make_mixed(d, refs["repeat"], refs["switch"])
    assert abs(expected_return(d, mixed) - (-0.5)) < 1e-12
    mp = build_env("matching_pennies")
    both_zero = zsclab.TabularPolicy.from_tables(
        mp, (np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]))
    )
    assert abs(expected_return(mp, both_zero) - (-0.5)) < 1e-12


def test_expected_return_consistent_with_distribution():
    rng = np.random.default_rng(11)
    for name in ("two_stage_lever", "asymmetric_lever"):
        d = build_env(name)
        for _ in range(5):
            pi = zsclab.TabularPolicy.random(d, rng)
            dist = history_distribution(d, pi)
            direct = sum(p * h.total_reward for h, p in dist.items())
            assert abs(expected_return(d, pi) - direct) < 1e-12


def test_sample_episode_deterministic_model():
    d = build_env("lever_coordination")
    pol = reference_policies("lever_coordination")["unique_lever"]
    episodes = {
        sample_episode(d, pol, np.random.default_rng(seed)) for seed in range(5)
    }
    assert len(episodes) == 1


def test_sample_episode_support_and_reproducibility():
    d = build_env("two_stage_lever")
    rep = reference_policies("two_stage_lever")["repeat"]
    support = set(history_distribution(d, rep))
    for seed in (0, 1):
        h1 = sample_episode(d, rep, np.random.default_rng(seed))
        h2 = sample_episode(d, rep, np.random.default_rng(seed))
        assert h1 == h2
        assert h1 in support


def test_sample_episode_frequencies_match_distribution():
    d = build_env("two_stage_lever")
    rep = reference_policies("two_stage_lever")["repeat"]
    dist = history_distribution(d, rep)
    n = 100_000
    rng = np.random.default_rng(123)
    counts = {}
    for _ in range(n):
        h = sample_episode(d, rep, rng)
        counts[h] = counts.get(h, 0) + 1
    for h, p in dist.items():
        freq = counts.get(h, 0) / n
        se = math.sqrt(p * (1 - p) / n)
        assert abs(freq - p) <= 3 * se + 1e-12, (h, freq, p)


def test_expected_return_mc():
    d = build_env("two_stage_lever")
    rep = reference_policies("two_stage_lever")["repeat"]
    mean, se = expected_return_mc(d, rep, 4096, seed=7)
    assert se > 0
    assert abs(mean - 0.5) <= 3 * se
    # deterministic chain: exact value, zero std error
    lever = build_env("lever_coordination")
    pol = reference_policies("lever_coordination")["unique_lever"]
    mean, se = expected_return_mc(lever, pol, 256, seed=1)
    assert mean == 0.9 and se == 0.0
    # single episode returns that episode's reward
    mean1, se1 = expected_return_mc(d, rep, 1, seed=3)
    h = None
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=7))
    )
    assert se1 == 0.0
    assert mean1 in {2.0, 0.0, -2.0}  # possible episode returns of the game


def test_expected_return_mc_reproducible():
    d = build_env("two_stage_lever")
    rep = reference_policies("two_stage_lever")["repeat"]
    a = expected_return_mc(d, rep, 1000, seed=42)
    b = expected_return_mc(d, rep, 1000, seed=42)
    assert a == b


def test_mc_convergence_over_seed_set():
    d = build_env("two_stage_lever")
    rep = reference_policies("two_stage_lever")["repeat"]
    exact = expected_return(d, rep)
    hits = 0
    n_seeds = 60
    for seed in range(n_seeds):
        mean, se = expected_return_mc(d, rep, 512, seed=seed)
        if abs(mean - exact) <= 4 * se:
            hits += 1
    assert hits >= math.ceil(0.99 * n_seeds) - 1


def test_episode_draw_count_matches_consumption():
    d = build_env("asymmetric_lever")
    rep = reference_policies("asymmetric_lever")["follower_repeat"]
    rng = np.random.default_rng(5)
    u = rng.random(episode_draw_count(d))
    h = zsclab.core.sample_episode_from_uniforms(d, rep, u)
    assert h.horizon == d.horizon


def test_policy_validation():
    d = build_env("two_stage_lever")
    pol = zsclab.TabularPolicy.uniform(d)
    assert pol.validate() == []
    bad = zsclab.TabularPolicy(
        d.n_actions, d.n_observations, d.horizon,
        tuple(t * 0.5 for t in pol.tables),
    )
    assert bad.validate() != []
