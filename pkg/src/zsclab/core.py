"""Finite-horizon Dec-POMDP model, episode semantics, and exact/Monte-Carlo returns.

Conventions used throughout the package:

* all index sets are dense 0-based ranges,
* joint action/observation indices flatten agent-major (agent 0 is the
  most significant digit),
* decisions happen at steps t = 0..T; observations arrive at t = 1..T,
  drawn from ``observation[s_t, a_{t-1}]`` after the state transition.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .serialize import env_fingerprint

DEFAULT_HISTORY_CAP = 10**7

PROB_TOL = 1e-12

MC_CHUNK = 1024


class ResourceCapError(RuntimeError):
    """Raised when an exact enumeration would exceed its configured cap."""


def _joint_size(counts: Sequence[int]) -> int:
    return int(np.prod(counts, dtype=np.int64)) if len(counts) else 1


@dataclass(frozen=True)
class DecPomdp:
    """Tabular Dec-POMDP.

    transition[s, ja] is a distribution over next states, observation[s, ja]
    a distribution over joint observations (indexed agent-major) and
    reward[s, ja] a real. ``horizon`` is T, so an episode has T+1 decision
    rounds.
    """

    n_agents: int
    n_states: int
    n_actions: tuple[int, ...]
    n_observations: tuple[int, ...]
    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    initial: np.ndarray
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "n_actions", tuple(int(k) for k in self.n_actions))
        object.__setattr__(
            self, "n_observations", tuple(int(k) for k in self.n_observations)
        )
        for name in ("transition", "observation", "reward", "initial"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_joint_actions(self) -> int:
        return _joint_size(self.n_actions)

    @property
    def n_joint_observations(self) -> int:
        return _joint_size(self.n_observations)

    def joint_action_index(self, actions: Sequence[int]) -> int:
        idx = 0
        for k, a in zip(self.n_actions, actions):
            idx = idx * k + a
        return idx

    def joint_action_tuple(self, index: int) -> tuple[int, ...]:
        out = []
        for k in reversed(self.n_actions):
            out.append(index % k)
            index //= k
        return tuple(reversed(out))

    def joint_observation_index(self, obs: Sequence[int]) -> int:
        idx = 0
        for k, o in zip(self.n_observations, obs):
            idx = idx * k + o
        return idx

    def joint_observation_tuple(self, index: int) -> tuple[int, ...]:
        out = []
        for k in reversed(self.n_observations):
            out.append(index % k)
            index //= k
        return tuple(reversed(out))

    @property
    def fingerprint(self) -> str:
        fp = self.__dict__.get("_fingerprint")
        if fp is None:
            fp = env_fingerprint(self)
            self.__dict__["_fingerprint"] = fp
        return fp

    def same_shape(self, other: "DecPomdp") -> bool:
        return (
            self.n_agents == other.n_agents
            and self.n_states == other.n_states
            and sorted(self.n_actions) == sorted(other.n_actions)
            and sorted(self.n_observations) == sorted(other.n_observations)
            and self.horizon == other.horizon
        )


def validate_decpomdp(d: DecPomdp) -> list[str]:
    """Return every invariant violation with its location; empty iff valid."""
    problems: list[str] = []
    ja, jo = d.n_joint_actions, d.n_joint_observations
    if d.n_agents != len(d.n_actions) or d.n_agents != len(d.n_observations):
        problems.append("per-agent action/observation counts do not match n_agents")
        return problems
    if d.horizon < 0:
        problems.append("horizon must be >= 0")
    shapes = {
        "transition": (d.n_states, ja, d.n_states),
        "observation": (d.n_states, ja, jo),
        "reward": (d.n_states, ja),
        "initial": (d.n_states,),
    }
    for name, want in shapes.items():
        got = getattr(d, name).shape
        if got != want:
            problems.append(f"{name} has shape {got}, expected {want}")
    if problems:
        return problems

    def check_rows(name, arr2d, labeler):
        for idx in range(arr2d.shape[0]):
            row = arr2d[idx]
            if np.any(row < 0):
                problems.append(f"{name}{labeler(idx)}: negative entry")
            elif abs(row.sum() - 1.0) > PROB_TOL:
                problems.append(f"{name}{labeler(idx)}: row sums to {row.sum():.17g}")

    check_rows(
        "transition",
        d.transition.reshape(-1, d.n_states),
        lambda i: f"[s={i // ja}, a={i % ja}]",
    )
    check_rows(
        "observation",
        d.observation.reshape(-1, jo),
        lambda i: f"[s={i // ja}, a={i % ja}]",
    )
    check_rows("initial", d.initial.reshape(1, -1), lambda i: "")
    if not np.all(np.isfinite(d.reward)):
        problems.append("reward: non-finite entry")
    return problems


@dataclass(frozen=True)
class History:
    """Full episode record: s_0, a_0, r_0, then (s_t, o_t, a_t, r_t) for t=1..T.

    ``observations[t-1]`` holds the joint observation received at step t.
    """

    states: tuple[int, ...]
    actions: tuple[tuple[int, ...], ...]
    rewards: tuple[float, ...]
    observations: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        T = len(self.states) - 1
        if not (len(self.actions) == len(self.rewards) == T + 1):
            raise ValueError("history length mismatch")
        if len(self.observations) != T:
            raise ValueError("history observation length mismatch")

    @property
    def horizon(self) -> int:
        return len(self.states) - 1

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    def ao_prefix(self, agent: int, t: int) -> tuple[int, ...]:
        """Agent's action-observation history (a_0, o_1, ..., a_{t-1}, o_t)."""
        out = []
        for u in range(t):
            out.append(self.actions[u][agent])
            out.append(self.observations[u][agent])
        return tuple(out)


def enumerate_ao_histories(d: DecPomdp, agent: int, t: int) -> list[tuple[int, ...]]:
    """All (|A_i|*|O_i|)^t action-observation histories of length t, lexicographic."""
    if not 0 <= t <= d.horizon:
        raise ValueError(f"step {t} outside 0..{d.horizon}")
    pair = [
        (a, o)
        for a in range(d.n_actions[agent])
        for o in range(d.n_observations[agent])
    ]
    out = []
    for combo in itertools.product(pair, repeat=t):
        flat: tuple[int, ...] = ()
        for a, o in combo:
            flat += (a, o)
        out.append(flat)
    return out


def ao_rank(n_actions: int, n_observations: int, ao: Sequence[int]) -> int:
    """Lexicographic rank of an AO history within its length class."""
    r = 0
    for u in range(0, len(ao), 2):
        r = r * (n_actions * n_observations) + ao[u] * n_observations + ao[u + 1]
    return r


def ao_table_layout(n_actions: int, n_observations: int, horizon: int):
    """(level offsets, total rows) for one agent's policy table."""
    offsets = [0]
    block = 1
    for _ in range(horizon + 1):
        offsets.append(offsets[-1] + block)
        block *= n_actions * n_observations
    return tuple(offsets[:-1]), offsets[-1]


@dataclass(frozen=True)
class TabularPolicy:
    """Joint policy as per-agent probability tables over all AO histories.

    ``tables[i]`` has one row per syntactically possible AO history of agent i
    (lengths 0..T, lexicographic within each length), reachable or not.
    Optional ``logits`` back the tables via row-wise softmax.
    """

    n_actions: tuple[int, ...]
    n_observations: tuple[int, ...]
    horizon: int
    tables: tuple[np.ndarray, ...]
    logits: tuple[np.ndarray, ...] | None = None
    env_fingerprint: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "n_actions", tuple(self.n_actions))
        object.__setattr__(self, "n_observations", tuple(self.n_observations))
        tables = []
        for i, tab in enumerate(self.tables):
            arr = np.ascontiguousarray(np.asarray(tab, dtype=np.float64))
            arr.setflags(write=False)
            tables.append(arr)
        object.__setattr__(self, "tables", tuple(tables))

    @property
    def n_agents(self) -> int:
        return len(self.n_actions)

    def layout(self, agent: int):
        return ao_table_layout(
            self.n_actions[agent], self.n_observations[agent], self.horizon
        )

    def row_index(self, agent: int, ao: Sequence[int]) -> int:
        offsets, _ = self.layout(agent)
        t = len(ao) // 2
        return offsets[t] + ao_rank(self.n_actions[agent], self.n_observations[agent], ao)

    def dist(self, agent: int, ao: Sequence[int]) -> np.ndarray:
        return self.tables[agent][self.row_index(agent, ao)]

    def prob(self, agent: int, action: int, ao: Sequence[int]) -> float:
        return float(self.dist(agent, ao)[action])

    def validate(self) -> list[str]:
        problems = []
        for i, tab in enumerate(self.tables):
            _, rows = self.layout(i)
            if tab.shape != (rows, self.n_actions[i]):
                problems.append(
                    f"agent {i}: table shape {tab.shape}, expected {(rows, self.n_actions[i])}"
                )
                continue
            if np.any(tab < 0):
                problems.append(f"agent {i}: negative probability")
            bad = np.where(np.abs(tab.sum(axis=1) - 1.0) > PROB_TOL)[0]
            if bad.size:
                problems.append(f"agent {i}: rows {bad.tolist()} do not sum to 1")
        return problems

    def matches_env(self, d: DecPomdp) -> bool:
        return (
            self.n_actions == d.n_actions
            and self.n_observations == d.n_observations
            and self.horizon == d.horizon
        )

    @classmethod
    def uniform(cls, d: DecPomdp) -> "TabularPolicy":
        tables = []
        for i in range(d.n_agents):
            _, rows = ao_table_layout(d.n_actions[i], d.n_observations[i], d.horizon)
            tables.append(np.full((rows, d.n_actions[i]), 1.0 / d.n_actions[i]))
        return cls(d.n_actions, d.n_observations, d.horizon, tuple(tables))

    @classmethod
    def from_tables(cls, d: DecPomdp, tables: Sequence[np.ndarray]) -> "TabularPolicy":
        return cls(d.n_actions, d.n_observations, d.horizon, tuple(tables))

    @classmethod
    def from_logits(cls, d: DecPomdp, logits: Sequence[np.ndarray]) -> "TabularPolicy":
        tables = [softmax_rows(np.asarray(z, dtype=np.float64)) for z in logits]
        return cls(
            d.n_actions,
            d.n_observations,
            d.horizon,
            tuple(tables),
            logits=tuple(np.array(z, dtype=np.float64) for z in logits),
        )

    @classmethod
    def random(cls, d: DecPomdp, rng: np.random.Generator) -> "TabularPolicy":
        """Dirichlet(1) rows; used by the randomized property checks."""
        tables = []
        for i in range(d.n_agents):
            _, rows = ao_table_layout(d.n_actions[i], d.n_observations[i], d.horizon)
            raw = rng.gamma(1.0, 1.0, size=(rows, d.n_actions[i]))
            tables.append(raw / raw.sum(axis=1, keepdims=True))
        return cls(d.n_actions, d.n_observations, d.horizon, tuple(tables))

    def max_abs_diff(self, other: "TabularPolicy") -> float:
        return max(
            float(np.max(np.abs(a - b))) for a, b in zip(self.tables, other.tables)
        )


def softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _support(row: np.ndarray) -> Iterator[tuple[int, float]]:
    for idx in np.nonzero(row)[0]:
        yield int(idx), float(row[idx])


def history_distribution(
    d: DecPomdp, pi: TabularPolicy, cap: int = DEFAULT_HISTORY_CAP
) -> dict[History, float]:
    """Exact distribution over full histories by forward enumeration.

    Raises ResourceCapError if the enumerated support would exceed ``cap``.
    """
    if not pi.matches_env(d):
        raise ValueError("policy shape does not match environment")
    out: dict[History, float] = {}
    T = d.horizon

    def expand(t, prob, states, actions, rewards, observations, ao_rows):
        if len(out) > cap:
            raise ResourceCapError(f"history support exceeds cap {cap}")
        s = states[-1]
        joint_rows = [pi.tables[i][ao_rows[i]] for i in range(d.n_agents)]
        for acts in itertools.product(*[_support(r) for r in joint_rows]):
            a = tuple(x[0] for x in acts)
            pa = prob * math.prod(x[1] for x in acts)
            ja = d.joint_action_index(a)
            r = float(d.reward[s, ja])
            if t == T:
                h = History(states, actions + (a,), rewards + (r,), observations)
                out[h] = out.get(h, 0.0) + pa
                continue
            for s2, ps in _support(d.transition[s, ja]):
                for jo, po in _support(d.observation[s2, ja]):
                    o = d.joint_observation_tuple(jo)
                    rows2 = tuple(
                        _advance_row(pi, i, ao_rows[i], t, a[i], o[i])
                        for i in range(d.n_agents)
                    )
                    expand(
                        t + 1,
                        pa * ps * po,
                        states + (s2,),
                        actions + (a,),
                        rewards + (r,),
                        observations + (o,),
                        rows2,
                    )

    start_rows = tuple(0 for _ in range(d.n_agents))
    for s0, p0 in _support(d.initial):
        expand(0, p0, (s0,), (), (), (), start_rows)
    return out


def _advance_row(pi: TabularPolicy, agent: int, row: int, t: int, a: int, o: int) -> int:
    """Next-level AO row index after taking action a and observing o at step t."""
    offsets, _ = pi.layout(agent)
    k = pi.n_actions[agent] * pi.n_observations[agent]
    rank = row - offsets[t]
    return offsets[t + 1] + rank * k + a * pi.n_observations[agent] + o


def expected_return(d: DecPomdp, pi: TabularPolicy, cap: int = DEFAULT_HISTORY_CAP) -> float:
    """Exact expected sum of rewards; same enumeration tree as history_distribution."""
    if not pi.matches_env(d):
        raise ValueError("policy shape does not match environment")
    T = d.horizon
    counter = [0]

    def expand(t, prob, s, ao_rows, reward_acc):
        counter[0] += 1
        if counter[0] > cap:
            raise ResourceCapError(f"history support exceeds cap {cap}")
        total = 0.0
        joint_rows = [pi.tables[i][ao_rows[i]] for i in range(d.n_agents)]
        for acts in itertools.product(*[_support(r) for r in joint_rows]):
            a = tuple(x[0] for x in acts)
            pa = prob * math.prod(x[1] for x in acts)
            ja = d.joint_action_index(a)
            acc = reward_acc + float(d.reward[s, ja])
            if t == T:
                total += pa * acc
                continue
            for s2, ps in _support(d.transition[s, ja]):
                for jo, po in _support(d.observation[s2, ja]):
                    o = d.joint_observation_tuple(jo)
                    rows2 = tuple(
                        _advance_row(pi, i, ao_rows[i], t, a[i], o[i])
                        for i in range(d.n_agents)
                    )
                    total += expand(t + 1, pa * ps * po, s2, rows2, acc)
        return total

    start_rows = tuple(0 for _ in range(d.n_agents))
    return sum(
        expand(0, p0, s0, start_rows, 0.0) for s0, p0 in _support(d.initial)
    )


def _pick(cdf_row: np.ndarray, u: float) -> int:
    return int(np.searchsorted(cdf_row, u, side="right"))


def episode_draw_count(d: DecPomdp) -> int:
    """Uniform variates one episode consumes: s0, actions, then (s', o) per step."""
    return 1 + (d.horizon + 1) * d.n_agents + d.horizon * 2


def sample_episode_from_uniforms(
    d: DecPomdp, pi: TabularPolicy, uniforms: np.ndarray
) -> History:
    """Deterministic episode from pre-drawn uniforms (see episode_draw_count).

    Useful for paired comparisons: running two policies on common draws
    cancels the noise they share.
    """
    if not pi.matches_env(d):
        raise ValueError("policy shape does not match environment")
    u = iter(uniforms)
    s = _pick(np.cumsum(d.initial), next(u))
    states = [s]
    actions: list[tuple[int, ...]] = []
    rewards: list[float] = []
    observations: list[tuple[int, ...]] = []
    ao_rows = [0] * d.n_agents
    for t in range(d.horizon + 1):
        a = tuple(
            _pick(np.cumsum(pi.tables[i][ao_rows[i]]), next(u))
            for i in range(d.n_agents)
        )
        ja = d.joint_action_index(a)
        actions.append(a)
        rewards.append(float(d.reward[s, ja]))
        if t < d.horizon:
            s = _pick(np.cumsum(d.transition[s, ja]), next(u))
            jo = _pick(np.cumsum(d.observation[s, ja]), next(u))
            o = d.joint_observation_tuple(jo)
            states.append(s)
            observations.append(o)
            ao_rows = [
                _advance_row(pi, i, ao_rows[i], t, a[i], o[i])
                for i in range(d.n_agents)
            ]
    return History(tuple(states), tuple(actions), tuple(rewards), tuple(observations))


def sample_episode(d: DecPomdp, pi: TabularPolicy, rng: np.random.Generator) -> History:
    """Draw one full episode; identical seed gives an identical episode."""
    return sample_episode_from_uniforms(d, pi, rng.random(episode_draw_count(d)))


def expected_return_mc(
    d: DecPomdp, pi: TabularPolicy, n_episodes: int, seed: int
) -> tuple[float, float]:
    """Monte-Carlo estimate of the expected return.

    Episodes are drawn in fixed-size chunks with independently derived
    streams, so the result does not depend on how chunks are distributed
    across workers.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    root = np.random.SeedSequence(entropy=seed)
    n_chunks = (n_episodes + MC_CHUNK - 1) // MC_CHUNK
    children = root.spawn(n_chunks)
    total = 0.0
    total_sq = 0.0
    done = 0
    for c in range(n_chunks):
        rng = np.random.Generator(np.random.PCG64(children[c]))
        m = min(MC_CHUNK, n_episodes - done)
        for _ in range(m):
            g = sample_episode(d, pi, rng).total_reward
            total += g
            total_sq += g * g
        done += m
    mean = total / n_episodes
    if n_episodes == 1:
        return mean, 0.0
    var = max(0.0, (total_sq - n_episodes * mean * mean) / (n_episodes - 1))
    return mean, math.sqrt(var / n_episodes)
