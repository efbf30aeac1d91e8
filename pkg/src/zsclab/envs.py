"""Built-in coordination games and their analytic reference policies.

All four catalog games are two-agent and fully cooperative. In the lever
games every agent observes the other's previous action; a single dummy
observation is used where a game has no information flow at all.
"""

from __future__ import annotations

import numpy as np

from .core import DecPomdp, TabularPolicy, ao_table_layout, enumerate_ao_histories


def lever_coordination(n_levers: int = 10) -> DecPomdp:
    """One-shot lever pick: matching on levers 0..k-2 pays 1.0, on the last
    lever 0.9, and mismatching pays 0. The last lever is the only one an
    unlabeled agent can single out."""
    L = n_levers
    ja = L * L
    reward = np.zeros((1, ja))
    for a in range(L):
        reward[0, a * L + a] = 0.9 if a == L - 1 else 1.0
    return DecPomdp(
        n_agents=2,
        n_states=1,
        n_actions=(L, L),
        n_observations=(1, 1),
        transition=np.ones((1, ja, 1)),
        observation=np.ones((1, ja, 1)),
        reward=reward,
        initial=np.array([1.0]),
        horizon=0,
    )


def two_stage_lever() -> DecPomdp:
    """Two rounds of two levers; match pays +1, mismatch -1; each agent then
    observes the other's first-round action."""
    reward = np.array([[1.0, -1.0, -1.0, 1.0]])
    observation = np.zeros((1, 4, 4))
    for a0 in range(2):
        for a1 in range(2):
            ja = a0 * 2 + a1
            jo = a1 * 2 + a0  # each agent sees the other's action
            observation[0, ja, jo] = 1.0
    return DecPomdp(
        n_agents=2,
        n_states=1,
        n_actions=(2, 2),
        n_observations=(2, 2),
        transition=np.ones((1, 4, 1)),
        observation=observation,
        reward=reward,
        initial=np.array([1.0]),
        horizon=1,
    )


def asymmetric_lever() -> DecPomdp:
    """Three rounds of three levers with a state counting the round.

    Rounds 0-1: matching on lever 0 or 1 pays +1, everything else -1.
    Round 2: agent 0 pulling lever 2 pays +1 regardless of agent 1, else 0,
    which breaks the symmetry between the two agents.
    """
    S, L = 3, 3
    ja = L * L
    reward = np.zeros((S, ja))
    for s in (0, 1):
        for a0 in range(L):
            for a1 in range(L):
                match_good = a0 == a1 and a0 < 2
                reward[s, a0 * L + a1] = 1.0 if match_good else -1.0
    for a0 in range(L):
        for a1 in range(L):
            reward[2, a0 * L + a1] = 1.0 if a0 == 2 else 0.0
    transition = np.zeros((S, ja, S))
    transition[0, :, 1] = 1.0
    transition[1, :, 2] = 1.0
    transition[2, :, 2] = 1.0
    observation = np.zeros((S, ja, ja))
    for a0 in range(L):
        for a1 in range(L):
            observation[:, a0 * L + a1, a1 * L + a0] = 1.0
    return DecPomdp(
        n_agents=2,
        n_states=S,
        n_actions=(L, L),
        n_observations=(L, L),
        transition=transition,
        observation=observation,
        reward=reward,
        initial=np.array([1.0, 0.0, 0.0]),
        horizon=2,
    )


def matching_pennies_like() -> DecPomdp:
    """One-shot game with symmetric agents but asymmetric actions; the only
    optimal play under random agent swaps is stochastic."""
    reward = np.array([[-0.5, 1.0, 1.0, -1.0]])
    return DecPomdp(
        n_agents=2,
        n_states=1,
        n_actions=(2, 2),
        n_observations=(1, 1),
        transition=np.ones((1, 4, 1)),
        observation=np.ones((1, 4, 1)),
        reward=reward,
        initial=np.array([1.0]),
        horizon=0,
    )


_CATALOG = {
    "lever_coordination": lever_coordination,
    "two_stage_lever": two_stage_lever,
    "asymmetric_lever": asymmetric_lever,
    "matching_pennies": matching_pennies_like,
}


def env_names() -> list[str]:
    return sorted(_CATALOG)


def build_env(name: str) -> DecPomdp:
    try:
        return _CATALOG[name]()
    except KeyError:
        raise KeyError(f"unknown environment {name!r}; known: {', '.join(env_names())}")


def _table(d: DecPomdp, agent: int, fill) -> np.ndarray:
    """Build one agent's policy table by calling fill(ao) -> prob row."""
    _, rows = ao_table_layout(d.n_actions[agent], d.n_observations[agent], d.horizon)
    tab = np.zeros((rows, d.n_actions[agent]))
    r = 0
    for t in range(d.horizon + 1):
        for ao in enumerate_ao_histories(d, agent, t):
            tab[r] = fill(ao)
            r += 1
    return tab


def _two_stage_policy(d: DecPomdp, repeat: bool) -> TabularPolicy:
    def fill(ao):
        if len(ao) == 0:
            return [0.5, 0.5]
        a, o = ao[0], ao[1]
        if a == o:  # coordinated in round one
            pick = a if repeat else 1 - a
            row = [0.0, 0.0]
            row[pick] = 1.0
            return row
        return [0.5, 0.5]

    tabs = tuple(_table(d, i, fill) for i in range(2))
    return TabularPolicy.from_tables(d, tabs)


def _asymmetric_policy(d: DecPomdp, adapter: int, repeat: bool) -> TabularPolicy:
    """Near-optimal play: uniform over the two good levers in round 0, the
    adapter copies the other agent on mismatch, repeat/switch on match, and
    agent 0 pulls the solo lever in round 2. Rows off that path stay uniform."""

    def fill_for(agent):
        def fill(ao):
            t = len(ao) // 2
            uniform = [1 / 3.0] * 3
            if t == 0:
                return [0.5, 0.5, 0.0]
            if t == 2:
                if agent == 0:
                    return [0.0, 0.0, 1.0]
                return uniform
            a, o = ao[0], ao[1]
            if a > 1 or o > 1:
                return uniform
            if a == o:
                pick = a if repeat else 1 - a
            elif agent == adapter:
                pick = o
            else:
                pick = a
            row = [0.0, 0.0, 0.0]
            row[pick] = 1.0
            return row

        return fill

    tabs = tuple(_table(d, i, fill_for(i)) for i in range(2))
    return TabularPolicy.from_tables(d, tabs)


def reference_policies(name: str) -> dict[str, TabularPolicy]:
    """Named analytic policies for a catalog environment."""
    d = build_env(name)
    if name == "two_stage_lever":
        return {
            "repeat": _two_stage_policy(d, repeat=True),
            "switch": _two_stage_policy(d, repeat=False),
        }
    if name == "asymmetric_lever":
        return {
            "follower_repeat": _asymmetric_policy(d, adapter=1, repeat=True),
            "follower_switch": _asymmetric_policy(d, adapter=1, repeat=False),
            "leader_repeat": _asymmetric_policy(d, adapter=0, repeat=True),
            "leader_switch": _asymmetric_policy(d, adapter=0, repeat=False),
        }
    if name == "matching_pennies":
        row = np.array([[4 / 7.0, 3 / 7.0]])
        return {
            "mixed_optimum": TabularPolicy.from_tables(d, (row.copy(), row.copy()))
        }
    if name == "lever_coordination":
        L = d.n_actions[0]
        row = np.zeros((1, L))
        row[0, L - 1] = 1.0
        return {"unique_lever": TabularPolicy.from_tables(d, (row.copy(), row.copy()))}
    raise KeyError(f"unknown environment {name!r}")
