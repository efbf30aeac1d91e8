"""Cross-play matrices, compatibility clustering, and the relabeling protocol.

Cross-play pairs agents from independently trained joint policies, each
permuted by its own random automorphism. The full protocol additionally
hands every principal a privately relabeled copy of the model, runs their
procedure there, and pulls the result back through a random isomorphism
before assembly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import DecPomdp, TabularPolicy, expected_return, sample_episode
from .otherplay import exact_evaluator
from .symmetry import (
    Isomorphism,
    compose,
    enumerate_automorphisms,
    pushforward_policy,
    relabel,
    sample_labeling,
)

Procedure = Callable[[DecPomdp, np.random.Generator], TabularPolicy]


@dataclass
class XpMatrix:
    values: np.ndarray
    n_episodes: int | None  # None for exact evaluation
    env_fingerprint: str

    @property
    def size(self) -> int:
        return self.values.shape[0]


def _assemble(slot_tables: Sequence[np.ndarray], template: TabularPolicy) -> TabularPolicy:
    return TabularPolicy(
        template.n_actions, template.n_observations, template.horizon, tuple(slot_tables)
    )


def _permuted_slot_tables(d: DecPomdp, pi: TabularPolicy) -> list[tuple[np.ndarray, ...]]:
    """For each automorphism g: the per-slot tables of g*pi."""
    return [pushforward_policy(g, pi).tables for g in enumerate_automorphisms(d)]


def xp_value_slots(
    d: DecPomdp,
    slot_policies: Sequence[TabularPolicy],
    n_episodes: int | None = None,
    seed: int = 0,
) -> float:
    """Average return when agent slot i is filled from slot_policies[i], each
    source permuted by an independent uniform automorphism.

    With n_episodes None the average runs exactly over all |Aut|^N
    combinations; otherwise it is a Monte-Carlo estimate.
    """
    if len(slot_policies) != d.n_agents:
        raise ValueError("need one source policy per agent slot")
    auts = enumerate_automorphisms(d)
    if n_episodes is None:
        ev = exact_evaluator(d)
        pushed = [_permuted_slot_tables(d, pi) for pi in slot_policies]
        total = 0.0
        count = 0
        for combo in np.ndindex(*([len(auts)] * d.n_agents)):
            tables = tuple(pushed[i][combo[i]][i] for i in range(d.n_agents))
            flat = np.concatenate([t.reshape(-1) for t in tables])
            total += ev.value(flat)
            count += 1
        return total / count
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed)))
    pushed = [_permuted_slot_tables(d, pi) for pi in slot_policies]
    cache: dict[tuple[int, ...], TabularPolicy] = {}
    total = 0.0
    for _ in range(n_episodes):
        key = tuple(int(x) for x in rng.integers(0, len(auts), size=d.n_agents))
        pol = cache.get(key)
        if pol is None:
            pol = _assemble(
                [pushed[i][key[i]][i] for i in range(d.n_agents)], slot_policies[0]
            )
            cache[key] = pol
        total += sample_episode(d, pol, rng).total_reward
    return total / n_episodes


def xp_value(
    d: DecPomdp,
    pi1: TabularPolicy,
    pi2: TabularPolicy,
    n_episodes: int | None = None,
    seed: int = 0,
) -> float:
    """Two-agent cross-play value: agent 0 from pi1, agent 1 from pi2."""
    if d.n_agents != 2:
        raise ValueError("xp_value is the two-agent form; use xp_value_slots")
    return xp_value_slots(d, [pi1, pi2], n_episodes=n_episodes, seed=seed)


def xp_matrix(
    d: DecPomdp,
    policies: Sequence[TabularPolicy],
    n_episodes: int | None = 2048,
    seed: int = 0,
) -> XpMatrix:
    """All ordered pairings; cell (k, l) uses its own derived seed."""
    if len(policies) < 2:
        raise ValueError("need at least two policies")
    m = len(policies)
    values = np.zeros((m, m))
    for k in range(m):
        for l in range(m):
            cell_seed = int(
                np.random.SeedSequence(entropy=(seed, k, l)).generate_state(1)[0]
            )
            values[k, l] = xp_value_slots(
                d,
                [policies[k]] + [policies[l]] * (d.n_agents - 1),
                n_episodes=n_episodes,
                seed=cell_seed,
            )
    return XpMatrix(values, n_episodes, d.fingerprint)


def avg_offdiag(m: XpMatrix) -> float:
    k = m.size
    mask = ~np.eye(k, dtype=bool)
    return float(m.values[mask].mean())


@dataclass(frozen=True)
class PolicyClass:
    members: tuple[int, ...]
    representative: int


def cluster_policies(
    d: DecPomdp,
    policies: Sequence[TabularPolicy],
    threshold: float = 0.6,
    n_episodes: int | None = 256,
    seed: int = 0,
) -> list[PolicyClass]:
    """Greedy compatibility clustering in input order.

    A policy joins the first class whose representative's cross-play value
    differs from the policy's own expected return by less than the threshold,
    else it opens a new class.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    classes: list[list[int]] = []
    for idx, pi in enumerate(policies):
        own = expected_return(d, pi)
        placed = False
        for ci, members in enumerate(classes):
            rep = members[0]
            cell_seed = int(
                np.random.SeedSequence(entropy=(seed, idx, rep)).generate_state(1)[0]
            )
            xp = xp_value_slots(
                d,
                [pi] + [policies[rep]] * (d.n_agents - 1),
                n_episodes=n_episodes,
                seed=cell_seed,
            )
            if abs(own - xp) < threshold:
                members.append(idx)
                placed = True
                break
        if not placed:
            classes.append([idx])
    return [PolicyClass(tuple(members), members[0]) for members in classes]


def lfc_payoff(
    d: DecPomdp,
    procedures: Sequence[Procedure] | Procedure,
    n_outer: int = 1000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte-Carlo payoff of a profile of policy-producing procedures.

    Per round and principal: draw a uniform labeling, hand the relabeled
    model to the principal's procedure, pull the returned policy back through
    an isomorphism drawn uniformly from the enumerated set, then evaluate the
    cross-assembled joint policy exactly. Returns (mean, standard error).
    """
    if callable(procedures):
        procedures = [procedures] * d.n_agents
    if len(procedures) != d.n_agents:
        raise ValueError("need one procedure per principal")
    auts = enumerate_automorphisms(d)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed)))
    total = 0.0
    total_sq = 0.0
    template = None
    for _ in range(n_outer):
        slot_tables = []
        for i in range(d.n_agents):
            f = sample_labeling(d, rng)
            env_i = relabel(d, f)
            pi_i = procedures[i](env_i, rng)
            if not pi_i.matches_env(env_i):
                raise ValueError("procedure returned a policy for the wrong model")
            # uniform over Iso(env_i, d) = Aut(d) composed after f^-1
            g = auts[int(rng.integers(0, len(auts)))]
            back = compose(g, f.invert())
            pulled = pushforward_policy(back, pi_i)
            slot_tables.append(pulled.tables[i])
            template = pulled
        joint = _assemble(slot_tables, template)
        value = expected_return(d, joint)
        total += value
        total_sq += value * value
    mean = total / n_outer
    if n_outer == 1:
        return mean, 0.0
    var = max(0.0, (total_sq - n_outer * mean * mean) / (n_outer - 1))
    return mean, math.sqrt(var / n_outer)
