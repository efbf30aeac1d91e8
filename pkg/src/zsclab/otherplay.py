"""Generalized other-play objective, automorphism profiles, and the symmetrizer.

The other-play (OP) value of a joint policy is its expected return when each
agent's local policy is independently permuted by a uniformly random
automorphism. ``symmetrize`` maps a policy to the automorphism-invariant
policy with the same OP value; two policies are equivalent when their
symmetrized forms agree on every jointly reachable action-observation row.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    DecPomdp,
    History,
    ResourceCapError,
    TabularPolicy,
    ao_table_layout,
    history_distribution,
    sample_episode,
)
from .symmetry import Isomorphism, enumerate_automorphisms, pushforward_policy

DEFAULT_PROFILE_CAP = 10**6


@dataclass(frozen=True)
class AutoProfile:
    """One automorphism per agent slot."""

    components: tuple[Isomorphism, ...]

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)


def apply_profile(profile: Sequence[Isomorphism], pi: TabularPolicy) -> TabularPolicy:
    """Agent i follows its slot of the pushforward by its own automorphism."""
    comps = list(profile)
    if len(comps) != pi.n_agents:
        raise ValueError("profile must supply one automorphism per agent")
    tables = tuple(
        pushforward_policy(g, pi).tables[i] for i, g in enumerate(comps)
    )
    return TabularPolicy(pi.n_actions, pi.n_observations, pi.horizon, tables)


def all_profiles(d: DecPomdp, cap: int = DEFAULT_PROFILE_CAP) -> list[tuple[Isomorphism, ...]]:
    auts = enumerate_automorphisms(d)
    count = len(auts) ** d.n_agents
    if count > cap:
        raise ResourceCapError(
            f"{count} automorphism profiles exceed cap {cap}; use the Monte-Carlo twin"
        )
    return list(itertools.product(auts, repeat=d.n_agents))


# ---------------------------------------------------------------------------
# Fast exact evaluation: enumerate the episode tree once per environment and
# evaluate returns as products of policy-table entries.
# ---------------------------------------------------------------------------


class ExactEvaluator:
    """Precomputed episode tree of an environment.

    Each history contributes env_weight (the product of all model factors)
    times the product of the policy entries it touches. Entries are indexed
    into a flat concatenation of the per-agent tables, so evaluating a new
    policy costs one gather and one product per history.
    """

    def __init__(self, d: DecPomdp):
        self.d = d
        uniform = TabularPolicy.uniform(d)
        dist = history_distribution(d, uniform)
        n = d.n_agents
        self.n_slots = (d.horizon + 1) * n
        offsets, sizes = [], []
        acc = 0
        for i in range(n):
            _, rows = ao_table_layout(d.n_actions[i], d.n_observations[i], d.horizon)
            offsets.append(acc)
            sizes.append(rows * d.n_actions[i])
            acc += rows * d.n_actions[i]
        self.table_offsets = tuple(offsets)
        self.flat_size = acc
        self.histories: list[History] = sorted(
            dist, key=lambda h: (h.states, h.actions, h.observations)
        )
        H = len(self.histories)
        self.reward_sum = np.array([h.total_reward for h in self.histories])
        self.rewards = np.array([h.rewards for h in self.histories])
        env_w = np.empty(H)
        rows = np.empty((H, self.n_slots), dtype=np.int64)
        acts = np.empty((H, self.n_slots), dtype=np.int64)
        agents = np.empty(self.n_slots, dtype=np.int64)
        for t in range(d.horizon + 1):
            for i in range(n):
                agents[t * n + i] = i
        self.slot_agents = agents
        for hi, h in enumerate(self.histories):
            p_pol = 1.0
            for t in range(d.horizon + 1):
                for i in range(n):
                    row = uniform.row_index(i, h.ao_prefix(i, t))
                    rows[hi, t * n + i] = row
                    acts[hi, t * n + i] = h.actions[t][i]
                    p_pol *= uniform.tables[i][row, h.actions[t][i]]
            env_w[hi] = dist[h] / p_pol
        self.env_weight = env_w
        self._rows = rows
        self._acts = acts
        # identity-profile flat entry indices
        self.entries_identity = self._entries(rows, acts)
        self._profile_cache: dict[tuple, np.ndarray] = {}

    def _entries(self, rows: np.ndarray, acts: np.ndarray) -> np.ndarray:
        d = self.d
        out = np.empty_like(rows)
        for k in range(self.n_slots):
            i = int(self.slot_agents[k])
            out[:, k] = self.table_offsets[i] + rows[:, k] * d.n_actions[i] + acts[:, k]
        return out

    def flatten(self, pi: TabularPolicy) -> np.ndarray:
        return np.concatenate([t.reshape(-1) for t in pi.tables])

    def value(self, flat: np.ndarray, entries: np.ndarray | None = None) -> float:
        e = self.entries_identity if entries is None else entries
        return float((self.env_weight * self.reward_sum * flat[e].prod(axis=1)).sum())

    def profile_entries(self, profile: Sequence[Isomorphism]) -> np.ndarray:
        """Entry indices for evaluating apply_profile(profile, pi) without
        materializing the permuted policy: slot (t, i) reads agent
        g_i^-1(i)'s table at the pulled-back row and action."""
        from .symmetry import _row_permutation

        key = tuple(g.sort_key() for g in profile)
        hit = self._profile_cache.get(key)
        if hit is not None:
            return hit
        d = self.d
        n = d.n_agents
        out = np.empty_like(self._rows)
        for i, g in enumerate(profile):
            g_inv = g.invert()
            j = g_inv.agent_perm[i]
            rowperm = _row_permutation(
                d.n_actions[i], d.n_observations[i], d.horizon,
                g_inv.action_maps[i], g_inv.obs_maps[i],
            )
            amap = np.asarray(g_inv.action_maps[i], dtype=np.int64)
            for t in range(d.horizon + 1):
                k = t * n + i
                out[:, k] = (
                    self.table_offsets[j]
                    + rowperm[self._rows[:, k]] * d.n_actions[j]
                    + amap[self._acts[:, k]]
                )
        self._profile_cache[key] = out
        return out


_EVALUATORS: dict[str, ExactEvaluator] = {}


def exact_evaluator(d: DecPomdp) -> ExactEvaluator:
    ev = _EVALUATORS.get(d.fingerprint)
    if ev is None:
        ev = ExactEvaluator(d)
        _EVALUATORS[d.fingerprint] = ev
    return ev


def op_value(d: DecPomdp, pi: TabularPolicy, cap: int = DEFAULT_PROFILE_CAP) -> float:
    """Exact OP objective: mean expected return over all automorphism profiles."""
    profiles = all_profiles(d, cap=cap)
    ev = exact_evaluator(d)
    flat = ev.flatten(pi)
    total = 0.0
    for prof in profiles:
        total += ev.value(flat, ev.profile_entries(prof))
    return total / len(profiles)


def op_value_mc(
    d: DecPomdp, pi: TabularPolicy, n_episodes: int, seed: int
) -> tuple[float, float]:
    """Sampled twin of op_value: fresh uniform profile per episode."""
    auts = enumerate_automorphisms(d)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed)))
    assembled: dict[tuple[int, ...], TabularPolicy] = {}
    total = 0.0
    total_sq = 0.0
    for _ in range(n_episodes):
        key = tuple(int(x) for x in rng.integers(0, len(auts), size=d.n_agents))
        pol = assembled.get(key)
        if pol is None:
            pol = apply_profile([auts[k] for k in key], pi)
            assembled[key] = pol
        g = sample_episode(d, pol, rng).total_reward
        total += g
        total_sq += g * g
    mean = total / n_episodes
    if n_episodes == 1:
        return mean, 0.0
    var = max(0.0, (total_sq - n_episodes * mean * mean) / (n_episodes - 1))
    return mean, math.sqrt(var / n_episodes)


# ---------------------------------------------------------------------------
# Symmetrizer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymmetrizedPolicy:
    """Automorphism-invariant image of a policy plus per-row reach flags.

    ``reachable[i][row]`` is True when the row has positive probability under
    the reference opponent distribution (the policy's own OP mixture for the
    agent, opponents mixed half-and-half with uniform play). Unreachable rows
    hold the uniform distribution.
    """

    policy: TabularPolicy
    reachable: tuple[np.ndarray, ...]


def _env_reach_sets(d: DecPomdp, agent: int) -> list[bool]:
    """For every AO row of one agent: can any opponent behavior produce it?

    Tracks the set of states compatible with the row; a row is producible iff
    that set is non-empty.
    """
    offsets, rows = ao_table_layout(d.n_actions[agent], d.n_observations[agent], d.horizon)
    state_sets: list[set[int]] = [set() for _ in range(rows)]
    state_sets[0] = {s for s in range(d.n_states) if d.initial[s] > 0}
    k = d.n_actions[agent] * d.n_observations[agent]
    n = d.n_agents
    others = [i for i in range(n) if i != agent]
    for t in range(d.horizon):
        base, nxt = offsets[t], offsets[t + 1]
        block = k**t
        for rank in range(block):
            src = base + rank
            if not state_sets[src]:
                continue
            for a in range(d.n_actions[agent]):
                for opp in itertools.product(*[range(d.n_actions[i]) for i in others]):
                    joint = [0] * n
                    joint[agent] = a
                    for i, ai in zip(others, opp):
                        joint[i] = ai
                    ja = d.joint_action_index(joint)
                    for s in state_sets[src]:
                        trans_row = d.transition[s, ja]
                        for s2 in np.nonzero(trans_row)[0]:
                            obs_row = d.observation[int(s2), ja]
                            for jo in np.nonzero(obs_row)[0]:
                                o = d.joint_observation_tuple(int(jo))
                                child = nxt + rank * k + a * d.n_observations[agent] + o[agent]
                                state_sets[child].add(int(s2))
    return [bool(s) for s in state_sets]


def symmetrize(d: DecPomdp, pi: TabularPolicy, cap: int = DEFAULT_PROFILE_CAP) -> SymmetrizedPolicy:
    """Condition the policy's OP mixture on each agent's own history.

    For agent i and row tau, the action law is the mixture of the candidate
    local policies {slot i of g*pi : g in Aut} weighted by the likelihood each
    candidate assigns to tau's own past actions. The opponent/environment
    factor is common to all candidates and cancels, so only producibility of
    the observations matters; rows with zero weight everywhere fall back to
    uniform and are flagged unreachable.
    """
    auts = enumerate_automorphisms(d)
    if len(auts) ** d.n_agents > cap:
        raise ResourceCapError(f"|Aut|^N exceeds cap {cap}")
    pushed = [pushforward_policy(g, pi) for g in auts]
    tables = []
    flags = []
    for i in range(d.n_agents):
        A, O = d.n_actions[i], d.n_observations[i]
        offsets, rows = ao_table_layout(A, O, d.horizon)
        cands = np.stack([p.tables[i] for p in pushed])  # (G, rows, A)
        lik = np.ones((len(auts), rows))
        k = A * O
        for t in range(d.horizon):
            base, nxt = offsets[t], offsets[t + 1]
            block = k**t
            for rank in range(block):
                src = base + rank
                for a in range(A):
                    w = lik[:, src] * cands[:, src, a]
                    for o in range(O):
                        lik[:, nxt + rank * k + a * O + o] = w
        env_ok = _env_reach_sets(d, i)
        tab = np.empty((rows, A))
        flag = np.zeros(rows, dtype=bool)
        for r in range(rows):
            total = lik[:, r].sum()
            if env_ok[r] and total > 0.0:
                tab[r] = (lik[:, r, None] * cands[:, r, :]).sum(axis=0) / total
                flag[r] = True
            else:
                tab[r] = 1.0 / A
        tables.append(tab)
        flags.append(flag)
    pol = TabularPolicy(d.n_actions, d.n_observations, d.horizon, tuple(tables))
    return SymmetrizedPolicy(pol, tuple(flags))


def is_invariant(d: DecPomdp, pi: TabularPolicy, tol: float = 1e-9) -> bool:
    """True iff every automorphism pushforward reproduces the policy within tol."""
    for g in enumerate_automorphisms(d):
        if pushforward_policy(g, pi).max_abs_diff(pi) > tol:
            return False
    return True


def policies_equivalent(
    d: DecPomdp, pi: TabularPolicy, pi2: TabularPolicy, tol: float = 1e-9
) -> bool:
    """Equality of the symmetrized policies on all jointly relevant rows.

    Rows unreachable under the reference distributions of both policies are
    excluded from the comparison.
    """
    s1 = symmetrize(d, pi)
    s2 = symmetrize(d, pi2)
    for i in range(d.n_agents):
        mask = s1.reachable[i] | s2.reachable[i]
        if not mask.any():
            continue
        diff = np.abs(s1.policy.tables[i][mask] - s2.policy.tables[i][mask])
        if diff.max() > tol:
            return False
    return True
