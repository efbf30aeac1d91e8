"""Isomorphisms, automorphisms, labelings, pushforwards, orbits, and normal forms.

An isomorphism between two Dec-POMDPs is a tuple of bijections (agents,
states, per-agent actions, per-agent observations) that preserves the
transition, observation, reward, and initial-state tables. Automorphisms
(self-isomorphisms) encode the symmetries that the other-play machinery
randomizes over.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .core import DecPomdp, History, ResourceCapError, TabularPolicy, ao_table_layout
from .serialize import iso_from_dict, iso_to_dict

KERNEL_TOL = 1e-12

DEFAULT_SEARCH_CAP = 10**8

CACHE_ENV_VAR = "ZSCLAB_CACHE"


@dataclass(frozen=True)
class Isomorphism:
    """Structure-preserving relabeling between two Dec-POMDPs.

    ``agent_perm[i]`` is the target agent for source agent i;
    ``action_maps[i]`` maps source agent i's actions onto the actions of
    agent ``agent_perm[i]`` (observations likewise). A labeling is the same
    object with the target env taken to be ``relabel(d, f)``.
    """

    agent_perm: tuple[int, ...]
    state_map: tuple[int, ...]
    action_maps: tuple[tuple[int, ...], ...]
    obs_maps: tuple[tuple[int, ...], ...]
    source_fingerprint: str | None = None
    target_fingerprint: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "agent_perm", tuple(int(x) for x in self.agent_perm))
        object.__setattr__(self, "state_map", tuple(int(x) for x in self.state_map))
        object.__setattr__(
            self, "action_maps", tuple(tuple(int(x) for x in m) for m in self.action_maps)
        )
        object.__setattr__(
            self, "obs_maps", tuple(tuple(int(x) for x in m) for m in self.obs_maps)
        )
        for name, perm in [("agent_perm", self.agent_perm), ("state_map", self.state_map)]:
            if sorted(perm) != list(range(len(perm))):
                raise ValueError(f"{name} is not a bijection onto a dense range")
        for name, maps in [("action_maps", self.action_maps), ("obs_maps", self.obs_maps)]:
            if len(maps) != len(self.agent_perm):
                raise ValueError(f"{name} must have one map per agent")
            for m in maps:
                if sorted(m) != list(range(len(m))):
                    raise ValueError(f"{name} entry is not a bijection onto a dense range")

    @property
    def n_agents(self) -> int:
        return len(self.agent_perm)

    def inv_agent(self, j: int) -> int:
        return self.agent_perm.index(j)

    def sort_key(self):
        # agent permutation first, then actions, then observations, then states
        return (self.agent_perm, self.action_maps, self.obs_maps, self.state_map)

    # -- actions on model elements ------------------------------------------

    def map_state(self, s: int) -> int:
        return self.state_map[s]

    def map_joint_action(self, a: Sequence[int]) -> tuple[int, ...]:
        out = [0] * self.n_agents
        for i, j in enumerate(self.agent_perm):
            out[j] = self.action_maps[i][a[i]]
        return tuple(out)

    def map_joint_observation(self, o: Sequence[int]) -> tuple[int, ...]:
        out = [0] * self.n_agents
        for i, j in enumerate(self.agent_perm):
            out[j] = self.obs_maps[i][o[i]]
        return tuple(out)

    def map_ao(self, agent: int, ao: Sequence[int]) -> tuple[int, tuple[int, ...]]:
        """Element-wise image of agent's AO history; returns (target agent, history)."""
        mapped = []
        for u, x in enumerate(ao):
            mapped.append(self.action_maps[agent][x] if u % 2 == 0 else self.obs_maps[agent][x])
        return self.agent_perm[agent], tuple(mapped)

    def map_history(self, h: History) -> History:
        """Image of a full history; rewards are carried over unchanged."""
        return History(
            states=tuple(self.state_map[s] for s in h.states),
            actions=tuple(self.map_joint_action(a) for a in h.actions),
            rewards=h.rewards,
            observations=tuple(self.map_joint_observation(o) for o in h.observations),
        )

    # -- group structure ----------------------------------------------------

    def invert(self) -> "Isomorphism":
        n = self.n_agents
        inv_agents = tuple(self.agent_perm.index(j) for j in range(n))
        inv_states = tuple(self.state_map.index(s) for s in range(len(self.state_map)))
        inv_actions: list[tuple[int, ...]] = [()] * n
        inv_obs: list[tuple[int, ...]] = [()] * n
        for i, j in enumerate(self.agent_perm):
            inv_actions[j] = tuple(
                self.action_maps[i].index(b) for b in range(len(self.action_maps[i]))
            )
            inv_obs[j] = tuple(self.obs_maps[i].index(b) for b in range(len(self.obs_maps[i])))
        return Isomorphism(
            inv_agents,
            inv_states,
            tuple(inv_actions),
            tuple(inv_obs),
            source_fingerprint=self.target_fingerprint,
            target_fingerprint=self.source_fingerprint,
        )


def identity_iso(d: DecPomdp) -> Isomorphism:
    return Isomorphism(
        agent_perm=tuple(range(d.n_agents)),
        state_map=tuple(range(d.n_states)),
        action_maps=tuple(tuple(range(k)) for k in d.n_actions),
        obs_maps=tuple(tuple(range(k)) for k in d.n_observations),
        source_fingerprint=d.fingerprint,
        target_fingerprint=d.fingerprint,
    )


def compose(g: Isomorphism, f: Isomorphism) -> Isomorphism:
    """g after f. Requires f's target to be g's source."""
    if (
        f.target_fingerprint is not None
        and g.source_fingerprint is not None
        and f.target_fingerprint != g.source_fingerprint
    ):
        raise ValueError("fingerprint mismatch: compose(g, f) needs target(f) == source(g)")
    agent_perm = tuple(g.agent_perm[f.agent_perm[i]] for i in range(f.n_agents))
    state_map = tuple(g.state_map[s] for s in f.state_map)
    action_maps = []
    obs_maps = []
    for i in range(f.n_agents):
        mid = f.agent_perm[i]
        action_maps.append(tuple(g.action_maps[mid][x] for x in f.action_maps[i]))
        obs_maps.append(tuple(g.obs_maps[mid][x] for x in f.obs_maps[i]))
    return Isomorphism(
        agent_perm,
        state_map,
        tuple(action_maps),
        tuple(obs_maps),
        source_fingerprint=f.source_fingerprint,
        target_fingerprint=g.target_fingerprint,
    )


def invert(f: Isomorphism) -> Isomorphism:
    return f.invert()


def apply_iso(f: Isomorphism, x):
    """Apply an isomorphism to a History (other carriers have typed methods)."""
    if isinstance(x, History):
        return f.map_history(x)
    raise TypeError("apply_iso dispatches on History; use the map_* methods otherwise")


# -- checking ---------------------------------------------------------------


def _shape_compatible(d: DecPomdp, e: DecPomdp, f: Isomorphism) -> str | None:
    if d.horizon != e.horizon:
        return "horizons differ"
    if d.n_agents != e.n_agents or len(f.agent_perm) != d.n_agents:
        return "agent counts differ"
    if d.n_states != e.n_states or len(f.state_map) != d.n_states:
        return "state counts differ"
    for i, j in enumerate(f.agent_perm):
        if len(f.action_maps[i]) != d.n_actions[i] or d.n_actions[i] != e.n_actions[j]:
            return f"action map for agent {i} has wrong size"
        if len(f.obs_maps[i]) != d.n_observations[i] or d.n_observations[i] != e.n_observations[j]:
            return f"observation map for agent {i} has wrong size"
    return None


def _joint_action_map(d: DecPomdp, f: Isomorphism) -> np.ndarray:
    m = np.empty(d.n_joint_actions, dtype=np.int64)
    # target agent j's action count equals source agent inv(j)'s count
    tgt_counts = [d.n_actions[f.inv_agent(j)] for j in range(d.n_agents)]
    for ja in range(d.n_joint_actions):
        fa = f.map_joint_action(d.joint_action_tuple(ja))
        idx = 0
        for j in range(d.n_agents):
            idx = idx * tgt_counts[j] + fa[j]
        m[ja] = idx
    return m


def _joint_obs_map(d: DecPomdp, f: Isomorphism) -> np.ndarray:
    m = np.empty(d.n_joint_observations, dtype=np.int64)
    tgt_counts = [d.n_observations[f.inv_agent(j)] for j in range(d.n_agents)]
    for jo in range(d.n_joint_observations):
        fo = f.map_joint_observation(d.joint_observation_tuple(jo))
        idx = 0
        for j in range(d.n_agents):
            idx = idx * tgt_counts[j] + fo[j]
        m[jo] = idx
    return m


def check_isomorphism(
    d: DecPomdp, e: DecPomdp, f: Isomorphism, tol: float = KERNEL_TOL
) -> tuple[bool, str | None]:
    """True iff f satisfies all four kernel-equality conditions within tol."""
    problem = _shape_compatible(d, e, f)
    if problem:
        raise ValueError(problem)
    m_s = np.asarray(f.state_map, dtype=np.int64)
    m_ja = _joint_action_map(d, f)
    m_jo = _joint_obs_map(d, f)

    lhs = d.initial
    rhs = e.initial[m_s]
    if np.max(np.abs(lhs - rhs)) > tol:
        s = int(np.argmax(np.abs(lhs - rhs)))
        return False, f"initial condition violated at s={s}"

    rhs = e.reward[np.ix_(m_s, m_ja)]
    diff = np.abs(d.reward - rhs)
    if np.max(diff) > tol:
        s, ja = np.unravel_index(int(np.argmax(diff)), diff.shape)
        return False, f"reward condition violated at (s={s}, a={d.joint_action_tuple(ja)})"

    rhs = e.transition[np.ix_(m_s, m_ja, m_s)]
    diff = np.abs(d.transition - rhs)
    if np.max(diff) > tol:
        s, ja, s2 = np.unravel_index(int(np.argmax(diff)), diff.shape)
        return False, f"transition condition violated at (s={s}, a={d.joint_action_tuple(ja)}, s'={s2})"

    rhs = e.observation[np.ix_(m_s, m_ja, m_jo)]
    diff = np.abs(d.observation - rhs)
    if np.max(diff) > tol:
        s, ja, jo = np.unravel_index(int(np.argmax(diff)), diff.shape)
        return False, f"observation condition violated at (s={s}, a={d.joint_action_tuple(ja)}, o={jo})"

    return True, None


# -- enumeration ------------------------------------------------------------


def _candidate_space(d: DecPomdp, e: DecPomdp) -> float:
    perms = 0
    for sigma in itertools.permutations(range(d.n_agents)):
        if all(
            d.n_actions[i] == e.n_actions[sigma[i]]
            and d.n_observations[i] == e.n_observations[sigma[i]]
            for i in range(d.n_agents)
        ):
            perms += 1
    size = float(perms) * math.factorial(d.n_states)
    for k in d.n_actions:
        size *= math.factorial(k)
    for k in d.n_observations:
        size *= math.factorial(k)
    return size


def enumerate_isomorphisms(
    d: DecPomdp, e: DecPomdp, cap: int = DEFAULT_SEARCH_CAP
) -> list[Isomorphism]:
    """Complete, duplicate-free list of isomorphisms from d to e.

    Backtracking assigns the agent permutation, then per-agent action maps
    value-by-value (pruned against reward and transition rows), then
    observation maps (pruned against the observation kernel), with the state
    map enumerated innermost-first against the initial distribution. Results
    are sorted lexicographically by (agents, actions, observations, states).
    """
    if d.horizon != e.horizon or d.n_states != e.n_states or d.n_agents != e.n_agents:
        return []
    if _candidate_space(d, e) > cap:
        raise ResourceCapError(
            f"isomorphism candidate space exceeds cap {cap}; reduce the model or raise the cap"
        )
    found: list[Isomorphism] = []
    n = d.n_agents
    for sigma in itertools.permutations(range(n)):
        if any(
            d.n_actions[i] != e.n_actions[sigma[i]]
            or d.n_observations[i] != e.n_observations[sigma[i]]
            for i in range(n)
        ):
            continue
        for state_map in _state_candidates(d, e):
            _search_actions(d, e, sigma, state_map, found)
    found.sort(key=Isomorphism.sort_key)
    return found


def _state_candidates(d: DecPomdp, e: DecPomdp) -> Iterable[tuple[int, ...]]:
    for perm in itertools.permutations(range(d.n_states)):
        ok = all(
            abs(d.initial[s] - e.initial[perm[s]]) <= KERNEL_TOL
            for s in range(d.n_states)
        )
        if ok:
            yield perm


def _search_actions(d, e, sigma, state_map, found):
    n = d.n_agents
    partial: list[list[int]] = [[-1] * k for k in d.n_actions]

    def joint_targets(a: tuple[int, ...]) -> int | None:
        out = [0] * n
        for i in range(n):
            v = partial[i][a[i]]
            if v < 0:
                return None
            out[sigma[i]] = v
        idx = 0
        for j in range(n):
            idx = idx * e.n_actions[j] + out[j]
        return idx

    def reward_consistent(agent: int, value: int) -> bool:
        # check every fully determined joint action that uses (agent, value)
        ranges = [
            [value] if i == agent else [x for x in range(d.n_actions[i]) if partial[i][x] >= 0]
            for i in range(n)
        ]
        for a in itertools.product(*ranges):
            ja = d.joint_action_index(a)
            fja = joint_targets(a)
            for s in range(d.n_states):
                fs = state_map[s]
                if abs(d.reward[s, ja] - e.reward[fs, fja]) > KERNEL_TOL:
                    return False
                lhs = d.transition[s, ja]
                rhs = e.transition[fs, fja]
                for s2 in range(d.n_states):
                    if abs(lhs[s2] - rhs[state_map[s2]]) > KERNEL_TOL:
                        return False
                # observation rows must agree as multisets already
                if not np.allclose(
                    np.sort(d.observation[s, ja]),
                    np.sort(e.observation[fs, fja]),
                    atol=KERNEL_TOL,
                    rtol=0.0,
                ):
                    return False
        return True

    def assign_actions(agent: int, value: int):
        if agent == n:
            _search_obs(d, e, sigma, state_map, [tuple(m) for m in partial], found)
            return
        if value == d.n_actions[agent]:
            assign_actions(agent + 1, 0)
            return
        used = {v for v in partial[agent] if v >= 0}
        for tgt in range(e.n_actions[sigma[agent]]):
            if tgt in used:
                continue
            partial[agent][value] = tgt
            if reward_consistent(agent, value):
                assign_actions(agent, value + 1)
            partial[agent][value] = -1

    assign_actions(0, 0)


def _search_obs(d, e, sigma, state_map, action_maps, found):
    n = d.n_agents
    m_ja = np.empty(d.n_joint_actions, dtype=np.int64)
    for ja in range(d.n_joint_actions):
        a = d.joint_action_tuple(ja)
        out = [0] * n
        for i in range(n):
            out[sigma[i]] = action_maps[i][a[i]]
        idx = 0
        for j in range(n):
            idx = idx * e.n_actions[j] + out[j]
        m_ja[ja] = idx
    partial: list[list[int]] = [[-1] * k for k in d.n_observations]

    def obs_consistent(agent: int, value: int) -> bool:
        ranges = [
            [value] if i == agent else [x for x in range(d.n_observations[i]) if partial[i][x] >= 0]
            for i in range(n)
        ]
        for o in itertools.product(*ranges):
            jo = d.joint_observation_index(o)
            out = [0] * n
            for i in range(n):
                out[sigma[i]] = partial[i][o[i]]
            fjo = 0
            for j in range(n):
                fjo = fjo * e.n_observations[j] + out[j]
            for s in range(d.n_states):
                fs = state_map[s]
                for ja in range(d.n_joint_actions):
                    if abs(d.observation[s, ja, jo] - e.observation[fs, m_ja[ja], fjo]) > KERNEL_TOL:
                        return False
        return True

    def assign_obs(agent: int, value: int):
        if agent == n:
            cand = Isomorphism(
                tuple(sigma),
                tuple(state_map),
                tuple(action_maps),
                tuple(tuple(m) for m in partial),
                source_fingerprint=d.fingerprint,
                target_fingerprint=e.fingerprint,
            )
            ok, _ = check_isomorphism(d, e, cand)
            if ok:
                found.append(cand)
            return
        if value == d.n_observations[agent]:
            assign_obs(agent + 1, 0)
            return
        used = {v for v in partial[agent] if v >= 0}
        for tgt in range(e.n_observations[sigma[agent]]):
            if tgt in used:
                continue
            partial[agent][value] = tgt
            if obs_consistent(agent, value):
                assign_obs(agent, value + 1)
            partial[agent][value] = -1

    assign_obs(0, 0)


_AUT_CACHE: dict[str, list[Isomorphism]] = {}


def enumerate_automorphisms(d: DecPomdp, cap: int = DEFAULT_SEARCH_CAP) -> list[Isomorphism]:
    """Aut(d) = Iso(d, d), memoized by env fingerprint (see ZSCLAB_CACHE)."""
    fp = d.fingerprint
    if fp in _AUT_CACHE:
        return _AUT_CACHE[fp]
    cached = _load_disk_cache(fp)
    if cached is not None:
        _AUT_CACHE[fp] = cached
        return cached
    auts = enumerate_isomorphisms(d, d, cap=cap)
    _AUT_CACHE[fp] = auts
    _store_disk_cache(fp, auts)
    return auts


def _cache_path(fp: str) -> str | None:
    root = os.environ.get(CACHE_ENV_VAR)
    if not root:
        return None
    os.makedirs(root, exist_ok=True)
    return os.path.join(root, f"auts_{fp}.json")


def _load_disk_cache(fp: str) -> list[Isomorphism] | None:
    path = _cache_path(fp)
    if path is None or not os.path.exists(path):
        return None
    try:
        with open(path) as fh:
            return [iso_from_dict(entry) for entry in json.load(fh)]
    except (json.JSONDecodeError, KeyError, ValueError):
        return None


def _store_disk_cache(fp: str, auts: list[Isomorphism]) -> None:
    path = _cache_path(fp)
    if path is None:
        return
    with open(path, "w") as fh:
        json.dump([iso_to_dict(g) for g in auts], fh)


# -- pushforward and relabeling --------------------------------------------


@lru_cache(maxsize=4096)
def _row_permutation(
    n_actions: int, n_observations: int, horizon: int, action_map: tuple, obs_map: tuple
) -> np.ndarray:
    """Row index of f(tau) in the target table for every source row tau."""
    offsets, total = ao_table_layout(n_actions, n_observations, horizon)
    out = np.empty(total, dtype=np.int64)
    a_map = np.asarray(action_map, dtype=np.int64)
    o_map = np.asarray(obs_map, dtype=np.int64)
    k = n_actions * n_observations
    pair = (a_map[:, None] * n_observations + o_map[None, :]).reshape(-1)
    level = np.zeros(1, dtype=np.int64)  # mapped rank per source rank, current length
    out[0] = 0
    for t in range(horizon):
        level = (level[:, None] * k + pair[None, :]).reshape(-1)
        out[offsets[t + 1] : offsets[t + 1] + level.size] = offsets[t + 1] + level
    return out


def pushforward_policy(f: Isomorphism, pi: TabularPolicy) -> TabularPolicy:
    """(f*pi)_j(a | tau) = pi_{f^-1 j}(f^-1 a | f^-1 tau), total over the target domain."""
    n = f.n_agents
    tables: list[np.ndarray | None] = [None] * n
    tgt_actions = [0] * n
    tgt_obs = [0] * n
    for i, j in enumerate(f.agent_perm):
        src = pi.tables[i]
        rows = _row_permutation(
            pi.n_actions[i], pi.n_observations[i], pi.horizon, f.action_maps[i], f.obs_maps[i]
        )
        a_map = np.asarray(f.action_maps[i], dtype=np.int64)
        tgt = np.empty_like(src)
        tgt[rows[:, None], a_map[None, :]] = src
        tables[j] = tgt
        tgt_actions[j] = pi.n_actions[i]
        tgt_obs[j] = pi.n_observations[i]
    return TabularPolicy(
        tuple(tgt_actions), tuple(tgt_obs), pi.horizon, tuple(tables)  # type: ignore[arg-type]
    )


def relabel(d: DecPomdp, f: Isomorphism) -> DecPomdp:
    """The pushforward model f*D with all tables precomposed by f^-1."""
    m_s = np.asarray(f.state_map, dtype=np.int64)
    if len(f.agent_perm) != d.n_agents or len(f.state_map) != d.n_states:
        raise ValueError("labeling shape does not match the model")
    for i in range(d.n_agents):
        if len(f.action_maps[i]) != d.n_actions[i] or len(f.obs_maps[i]) != d.n_observations[i]:
            raise ValueError("labeling shape does not match the model")
    n_actions = [0] * d.n_agents
    n_obs = [0] * d.n_agents
    for i, j in enumerate(f.agent_perm):
        n_actions[j] = d.n_actions[i]
        n_obs[j] = d.n_observations[i]
    m_ja = _joint_action_map(d, f)
    m_jo = _joint_obs_map(d, f)
    transition = np.empty_like(d.transition)
    transition[np.ix_(m_s, m_ja, m_s)] = d.transition
    observation = np.empty_like(d.observation)
    observation[np.ix_(m_s, m_ja, m_jo)] = d.observation
    reward = np.empty_like(d.reward)
    reward[np.ix_(m_s, m_ja)] = d.reward
    initial = np.empty_like(d.initial)
    initial[m_s] = d.initial
    return DecPomdp(
        n_agents=d.n_agents,
        n_states=d.n_states,
        n_actions=tuple(n_actions),
        n_observations=tuple(n_obs),
        transition=transition,
        observation=observation,
        reward=reward,
        initial=initial,
        horizon=d.horizon,
    )


def sample_labeling(d: DecPomdp, rng: np.random.Generator) -> Isomorphism:
    """Uniform draw over the full product of component permutations."""
    f = Isomorphism(
        agent_perm=tuple(int(x) for x in rng.permutation(d.n_agents)),
        state_map=tuple(int(x) for x in rng.permutation(d.n_states)),
        action_maps=tuple(tuple(int(x) for x in rng.permutation(k)) for k in d.n_actions),
        obs_maps=tuple(tuple(int(x) for x in rng.permutation(k)) for k in d.n_observations),
        source_fingerprint=d.fingerprint,
    )
    target = relabel(d, f)
    return Isomorphism(
        f.agent_perm,
        f.state_map,
        f.action_maps,
        f.obs_maps,
        source_fingerprint=d.fingerprint,
        target_fingerprint=target.fingerprint,
    )


def all_labelings(d: DecPomdp) -> list[Isomorphism]:
    """Every component-permutation tuple (use only on tiny models)."""
    out = []
    for sigma in itertools.permutations(range(d.n_agents)):
        for state_map in itertools.permutations(range(d.n_states)):
            for a_maps in itertools.product(
                *[itertools.permutations(range(k)) for k in d.n_actions]
            ):
                for o_maps in itertools.product(
                    *[itertools.permutations(range(k)) for k in d.n_observations]
                ):
                    out.append(
                        Isomorphism(
                            sigma,
                            state_map,
                            a_maps,
                            o_maps,
                            source_fingerprint=d.fingerprint,
                        )
                    )
    return out


def agent_orbits(d: DecPomdp, cap: int = DEFAULT_SEARCH_CAP) -> list[tuple[int, ...]]:
    """Partition of agents induced by the automorphism group."""
    parent = list(range(d.n_agents))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for g in enumerate_automorphisms(d, cap=cap):
        for i, j in enumerate(g.agent_perm):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[ri] = rj
    groups: dict[int, list[int]] = {}
    for i in range(d.n_agents):
        groups.setdefault(find(i), []).append(i)
    return sorted(tuple(sorted(v)) for v in groups.values())


# -- normal forms -----------------------------------------------------------


@dataclass(frozen=True)
class NormalForm:
    """Label-erased history: indices replaced by first-occurrence ranks.

    Ranks are maintained in independent tracks per (element kind, agent):
    one track for states, and one per agent for actions and observations.
    Rewards stay raw.
    """

    states: tuple[int, ...]
    actions: tuple[tuple[int, ...], ...]
    rewards: tuple[float, ...]
    observations: tuple[tuple[int, ...], ...]

    @property
    def n_agents(self) -> int:
        return len(self.actions[0])

    def to_history(self) -> History:
        return History(self.states, self.actions, self.rewards, self.observations)


class _Track:
    __slots__ = ("codes",)

    def __init__(self):
        self.codes: dict[int, int] = {}

    def code(self, x: int) -> int:
        if x not in self.codes:
            self.codes[x] = len(self.codes)
        return self.codes[x]


def normal_form(tau: History) -> NormalForm:
    n = len(tau.actions[0])
    state_track = _Track()
    action_tracks = [_Track() for _ in range(n)]
    obs_tracks = [_Track() for _ in range(n)]
    states = []
    actions = []
    observations = []
    for t in range(tau.horizon + 1):
        states.append(state_track.code(tau.states[t]))
        if t >= 1:
            observations.append(
                tuple(obs_tracks[i].code(tau.observations[t - 1][i]) for i in range(n))
            )
        actions.append(tuple(action_tracks[i].code(tau.actions[t][i]) for i in range(n)))
    return NormalForm(tuple(states), tuple(actions), tau.rewards, tuple(observations))


def permute_agents(agent_perm: Sequence[int], nf: NormalForm) -> NormalForm:
    """Reorder the per-agent slots: slot j receives source agent perm^-1(j)."""
    inv = [0] * len(agent_perm)
    for i, j in enumerate(agent_perm):
        inv[j] = i
    return NormalForm(
        states=nf.states,
        actions=tuple(tuple(a[inv[j]] for j in range(len(inv))) for a in nf.actions),
        rewards=nf.rewards,
        observations=tuple(
            tuple(o[inv[j]] for j in range(len(inv))) for o in nf.observations
        ),
    )
