import numpy as np
import pytest

import zsclab
from zsclab.envs import build_env, env_names, lever_coordination, reference_policies


def test_catalog_names():
    assert env_names() == [
        "asymmetric_lever",
        "lever_coordination",
        "matching_pennies",
        "two_stage_lever",
    ]
    with pytest.raises(KeyError):
        build_env("nope")


def test_lever_coordination_tables():
    d = build_env("lever_coordination")
    assert d.n_actions == (10, 10) and d.horizon == 0
    assert d.reward[0, d.joint_action_index((3, 3))] == 1.0
    assert d.reward[0, d.joint_action_index((9, 9))] == 0.9
    assert d.reward[0, d.joint_action_index((3, 4))] == 0.0
    small = lever_coordination(4)
    assert small.n_actions == (4, 4)
    assert small.reward[0, small.joint_action_index((3, 3))] == 0.9


def test_two_stage_tables():
    d = build_env("two_stage_lever")
    assert d.horizon == 1 and d.n_states == 1
    assert d.reward[0, d.joint_action_index((0, 0))] == 1.0
    assert d.reward[0, d.joint_action_index((0, 1))] == -1.0
    # each agent observes the other's previous action
    for a0 in range(2):
        for a1 in range(2):
            ja = d.joint_action_index((a0, a1))
            jo = d.joint_observation_index((a1, a0))
            assert d.observation[0, ja, jo] == 1.0


def test_asymmetric_tables():
    d = build_env("asymmetric_lever")
    assert d.n_states == 3 and d.horizon == 2
    # round counter marches forward deterministically
    assert d.transition[0, 0, 1] == 1.0 and d.transition[1, 0, 2] == 1.0
    for s in (0, 1):
        assert d.reward[s, d.joint_action_index((0, 0))] == 1.0
        assert d.reward[s, d.joint_action_index((1, 1))] == 1.0
        assert d.reward[s, d.joint_action_index((2, 2))] == -1.0
        assert d.reward[s, d.joint_action_index((0, 1))] == -1.0
    for a1 in range(3):
        assert d.reward[2, d.joint_action_index((2, a1))] == 1.0
        assert d.reward[2, d.joint_action_index((0, a1))] == 0.0


def test_matching_pennies_tables():
    d = build_env("matching_pennies")
    assert d.reward[0, d.joint_action_index((0, 0))] == -0.5
    assert d.reward[0, d.joint_action_index((0, 1))] == 1.0
    assert d.reward[0, d.joint_action_index((1, 0))] == 1.0
    assert d.reward[0, d.joint_action_index((1, 1))] == -1.0


def test_reference_policies_are_valid_and_invariant():
    for name in env_names():
        d = build_env(name)
        for pol_name, pol in reference_policies(name).items():
            assert pol.validate() == [], (name, pol_name)
            assert pol.matches_env(d)
            if name != "lever_coordination":  # automorphism group too large there
                assert zsclab.is_invariant(d, pol, tol=1e-12), (name, pol_name)


def test_two_stage_reference_rows():
    d = build_env("two_stage_lever")
    refs = reference_policies("two_stage_lever")
    rep, swi = refs["repeat"], refs["switch"]
    assert rep.prob(0, 1, (1, 1)) == 1.0  # coordinated on lever 1: play it again
    assert swi.prob(0, 0, (1, 1)) == 1.0  # coordinated on lever 1: play the other
    assert np.allclose(rep.dist(0, (1, 0)), [0.5, 0.5])  # mismatch: stay uniform
    assert np.allclose(rep.dist(0, ()), [0.5, 0.5])


def test_matching_pennies_reference_value():
    d = build_env("matching_pennies")
    mixed = reference_policies("matching_pennies")["mixed_optimum"]
    assert abs(zsclab.op_value(d, mixed) - 1.0 / 7.0) < 1e-12
