import itertools
import math

import numpy as np
import pytest

import zsclab
from zsclab.core import ResourceCapError, expected_return, history_distribution
from zsclab.envs import build_env, lever_coordination, reference_policies
from zsclab.symmetry import (
    Isomorphism,
    all_labelings,
    check_isomorphism,
    compose,
    enumerate_automorphisms,
    enumerate_isomorphisms,
    identity_iso,
    invert,
    normal_form,
    permute_agents,
    pushforward_policy,
    relabel,
    sample_labeling,
)


def agent2_action_swap(d):
    return Isomorphism(
        agent_perm=(0, 1),
        state_map=tuple(range(d.n_states)),
        action_maps=((0, 1), (1, 0)),
        obs_maps=((0, 1), (0, 1)),
    )


def test_check_isomorphism_identity():
    for name in zsclab.env_names():
        d = build_env(name)
        ok, why = check_isomorphism(d, d, identity_iso(d))
        assert ok, why


def test_check_isomorphism_relabeled_reward_table():
    d = build_env("two_stage_lever")
    f = agent2_action_swap(d)
    e = relabel(d, f)
    # swapping agent 2's action labels flips the reward diagonal
    assert np.allclose(e.reward[0], [-1.0, 1.0, 1.0, -1.0])
    ok, why = check_isomorphism(d, e, f)
    assert ok, why
    # the same tuple against the original model violates the reward condition
    ok, why = check_isomorphism(d, d, f)
    assert not ok
    assert "reward" in why


def test_enumerate_automorphism_counts():
    assert len(enumerate_automorphisms(build_env("two_stage_lever"))) == 4
    assert len(enumerate_automorphisms(build_env("asymmetric_lever"))) == 2
    assert len(enumerate_automorphisms(build_env("matching_pennies"))) == 2
    assert len(enumerate_automorphisms(lever_coordination(4))) == 2 * math.factorial(3)


def test_lever_game_structural_count_and_cap():
    # brute force on the reduced variant, then scale the structural formula:
    # any common permutation fixing the odd lever, times the agent swap
    reduced = lever_coordination(4)
    assert len(enumerate_automorphisms(reduced)) == 2 * math.factorial(3)
    full = lever_coordination(10)
    with pytest.raises(ResourceCapError):
        enumerate_isomorphisms(full, full)
    structural = 2 * math.factorial(9)
    assert structural == 725760


def test_group_laws_by_exhaustion():
    for d in (build_env("two_stage_lever"), build_env("asymmetric_lever"), lever_coordination(4)):
        auts = enumerate_automorphisms(d)
        keys = {g.sort_key() for g in auts}
        assert identity_iso(d).sort_key() in keys
        for g in auts:
            assert invert(g).sort_key() in keys
            assert compose(g, invert(g)).sort_key() == identity_iso(d).sort_key()
            assert compose(invert(g), g).sort_key() == identity_iso(d).sort_key()
            for h in auts:
                assert compose(g, h).sort_key() in keys


def test_iso_decomposition_unique():
    d = build_env("two_stage_lever")
    rng = np.random.default_rng(0)
    f0 = sample_labeling(d, rng)
    e = relabel(d, f0)
    isos = enumerate_isomorphisms(d, e)
    auts = enumerate_automorphisms(e)
    assert len(isos) == len(auts) == 4
    for f in isos:
        for f2 in isos:
            matches = [
                g for g in auts if compose(g, f).sort_key() == f2.sort_key()
            ]
            assert len(matches) == 1


def test_apply_iso_joint_action_swap():
    d = build_env("two_stage_lever")
    swap = next(
        g
        for g in enumerate_automorphisms(d)
        if g.agent_perm == (1, 0) and g.action_maps[0] == (0, 1)
    )
    assert swap.map_joint_action((0, 1)) == (1, 0)
    rep = reference_policies("two_stage_lever")["repeat"]
    h = zsclab.sample_episode(d, rep, np.random.default_rng(1))
    assert identity_iso(d).map_history(h) == h
    assert invert(swap).map_history(swap.map_history(h)) == h


def test_apply_iso_roundtrip_random():
    rng = np.random.default_rng(9)
    for name in ("two_stage_lever", "asymmetric_lever"):
        d = build_env(name)
        pol = zsclab.TabularPolicy.random(d, rng)
        for _ in range(10):
            f = sample_labeling(d, rng)
            h = zsclab.sample_episode(d, pol, rng)
            assert invert(f).map_history(f.map_history(h)) == h
            for i in range(d.n_agents):
                ao = h.ao_prefix(i, d.horizon)
                j, mapped = f.map_ao(i, ao)
                j2, back = invert(f).map_ao(j, mapped)
                assert (j2, back) == (i, ao)


def test_pushforward_identity_and_functoriality():
    rng = np.random.default_rng(21)
    d = build_env("two_stage_lever")
    pi = zsclab.TabularPolicy.random(d, rng)
    assert pushforward_policy(identity_iso(d), pi).max_abs_diff(pi) == 0.0
    f = sample_labeling(d, rng)
    e = relabel(d, f)
    g = sample_labeling(e, rng)
    lhs = pushforward_policy(g, pushforward_policy(f, pi))
    rhs = pushforward_policy(compose(g, f), pi)
    assert lhs.max_abs_diff(rhs) < 1e-15


def test_pushforward_preserves_return_and_distribution():
    rng = np.random.default_rng(33)
    for name in ("two_stage_lever", "matching_pennies"):
        d = build_env(name)
        for _ in range(5):
            pi = zsclab.TabularPolicy.random(d, rng)
            f = sample_labeling(d, rng)
            e = relabel(d, f)
            fpi = pushforward_policy(f, pi)
            assert abs(expected_return(d, pi) - expected_return(e, fpi)) < 1e-9
            dist_d = history_distribution(d, pi)
            dist_e = history_distribution(e, fpi)
            for tau, p in dist_d.items():
                assert abs(dist_e.get(f.map_history(tau), 0.0) - p) < 1e-12


def test_relabel_identity_and_iso_membership():
    d = build_env("asymmetric_lever")
    ident = identity_iso(d)
    e = relabel(d, ident)
    assert np.array_equal(e.reward, d.reward)
    assert np.array_equal(e.transition, d.transition)
    rng = np.random.default_rng(4)
    f = sample_labeling(d, rng)
    e = relabel(d, f)
    isos = enumerate_isomorphisms(d, e)
    assert isos
    assert f.sort_key() in {g.sort_key() for g in isos}


def test_sample_labeling_trivial_and_uniform():
    trivial = zsclab.DecPomdp(
        n_agents=1,
        n_states=1,
        n_actions=(1,),
        n_observations=(1,),
        transition=np.ones((1, 1, 1)),
        observation=np.ones((1, 1, 1)),
        reward=np.zeros((1, 1)),
        initial=np.array([1.0]),
        horizon=0,
    )
    rng = np.random.default_rng(0)
    f = sample_labeling(trivial, rng)
    assert f.sort_key() == identity_iso(trivial).sort_key()

    d = build_env("two_stage_lever")
    swaps = 0
    n = 10_000
    for _ in range(n):
        f = sample_labeling(d, rng)
        swaps += f.agent_perm == (1, 0)
    freq = swaps / n
    se = math.sqrt(0.25 / n)
    assert abs(freq - 0.5) <= 4 * se


def test_agent_orbits():
    assert zsclab.agent_orbits(build_env("two_stage_lever")) == [(0, 1)]
    assert zsclab.agent_orbits(build_env("asymmetric_lever")) == [(0,), (1,)]
    single = zsclab.DecPomdp(
        n_agents=1,
        n_states=1,
        n_actions=(2,),
        n_observations=(1,),
        transition=np.ones((1, 2, 1)),
        observation=np.ones((1, 2, 1)),
        reward=np.array([[0.0, 1.0]]),
        initial=np.array([1.0]),
        horizon=0,
    )
    assert zsclab.agent_orbits(single) == [(0,)]


def all_histories(d):
    return list(history_distribution(d, zsclab.TabularPolicy.uniform(d)))


def test_normal_form_repeats_and_idempotence():
    d = build_env("asymmetric_lever")
    pol = zsclab.TabularPolicy.from_tables(
        d,
        tuple(
            np.eye(3)[np.full(t.shape[0], 2)] for t in zsclab.TabularPolicy.uniform(d).tables
        ),
    )
    h = zsclab.sample_episode(d, pol, np.random.default_rng(0))
    nf = normal_form(h)
    # agent 0 plays lever 2 every round: all occurrences share code 0
    assert all(a[0] == 0 for a in nf.actions)
    nf2 = normal_form(nf.to_history())
    assert nf2 == nf


def test_normal_form_erases_within_agent_relabels():
    d = build_env("two_stage_lever")
    histories = all_histories(d)
    for f in all_labelings(d):
        if f.agent_perm != (0, 1):
            continue
        for tau in histories:
            assert normal_form(f.map_history(tau)) == normal_form(tau)


def test_normal_form_agent_permutation_commutes():
    d = build_env("two_stage_lever")
    histories = all_histories(d)
    for f in all_labelings(d):
        for tau in histories:
            lhs = normal_form(f.map_history(tau))
            rhs = permute_agents(f.agent_perm, normal_form(tau))
            assert lhs == rhs


def test_enumeration_order_is_deterministic():
    d = build_env("two_stage_lever")
    a = [g.sort_key() for g in enumerate_isomorphisms(d, d)]
    b = [g.sort_key() for g in enumerate_isomorphisms(d, d)]
    assert a == b == sorted(a)
